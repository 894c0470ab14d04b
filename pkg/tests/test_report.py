"""Slice PNG export and report figures."""

import numpy as np
import pytest
from PIL import Image

from rotsrr.report import (
    export_slice_png,
    save_error_map,
    save_loss_figure,
    save_slice_comparison,
    slice_array,
)
from rotsrr.volume import Volume3D


def volume(seed=0, dims=(6, 5, 4)):
    rng = np.random.default_rng(seed)
    return Volume3D.from_spacing(rng.random(dims), 1.0)


class TestSlicePng:
    def test_dimensions_match_slice(self, tmp_path):
        vol = volume(dims=(6, 5, 4))
        path = tmp_path / "s.png"
        export_slice_png(vol, "z", 2, path)
        img = Image.open(path)
        assert img.size == (6, 5)  # (width, height) = (nx, ny)
        assert img.mode == "L"

    def test_constant_volume_uniform_gray(self, tmp_path):
        vol = Volume3D.from_spacing(np.full((4, 4, 4), 0.3), 1.0)
        path = tmp_path / "c.png"
        export_slice_png(vol, 0, 1, path)
        arr = np.asarray(Image.open(path))
        assert np.all(arr == arr[0, 0])

    def test_reexport_is_byte_identical(self, tmp_path):
        vol = volume()
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        export_slice_png(vol, "y", 1, a)
        export_slice_png(vol, "y", 1, b)
        assert a.read_bytes() == b.read_bytes()

    def test_out_of_range_index_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_slice_png(volume(), "z", 99, tmp_path / "x.png")

    def test_min_max_windowing(self, tmp_path):
        data = np.zeros((3, 3, 1))
        data[0, 0, 0] = -2.0
        data[2, 2, 0] = 6.0
        vol = Volume3D.from_spacing(data, 1.0)
        path = tmp_path / "w.png"
        export_slice_png(vol, 2, 0, path)
        arr = np.asarray(Image.open(path))
        assert arr.min() == 0
        assert arr.max() == 255


class TestSliceArray:
    def test_orientation(self):
        vol = volume(dims=(6, 5, 4))
        assert slice_array(vol, "x", 0).shape == (4, 5)
        assert slice_array(vol, "y", 0).shape == (4, 6)
        assert slice_array(vol, "z", 0).shape == (5, 6)

    def test_axis_name_and_index_equivalent(self):
        vol = volume()
        np.testing.assert_array_equal(slice_array(vol, "z", 1), slice_array(vol, 2, 1))


class TestFigures:
    def test_loss_figure_written(self, tmp_path):
        history = np.column_stack([
            np.arange(50),
            np.geomspace(1.0, 1e-3, 50),
            np.zeros(50),
            np.geomspace(1.0, 1e-3, 50),
        ])
        path = tmp_path / "loss.png"
        save_loss_figure(history, path)
        assert path.stat().st_size > 0

    def test_comparison_and_error_map(self, tmp_path):
        a, b = volume(1, (8, 8, 8)), volume(2, (8, 8, 8))
        cmp_path = tmp_path / "cmp.png"
        err_path = tmp_path / "err.png"
        save_slice_comparison({"one": a, "two": b}, "z", 4, cmp_path)
        save_error_map(a, b, "z", 4, err_path)
        assert cmp_path.stat().st_size > 0
        assert err_path.stat().st_size > 0
