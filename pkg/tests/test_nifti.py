"""Minimal NIfTI-1 IO: roundtrip, header fields, endianness, error paths."""

import struct

import numpy as np
import pytest

from rotsrr.errors import NiftiParseError
from rotsrr.nifti import read_nifti, write_nifti
from rotsrr.volume import Volume3D


def f32_volume(seed=0, dims=(5, 6, 7)):
    rng = np.random.default_rng(seed)
    data = rng.random(dims).astype(np.float32).astype(np.float64)
    return Volume3D.from_spacing(data, (1.0, 1.5, 2.0))


class TestRoundtrip:
    def test_data_and_metadata_survive(self, tmp_path):
        vol = f32_volume()
        path = tmp_path / "vol.nii"
        write_nifti(vol, path)
        back = read_nifti(path)
        np.testing.assert_array_equal(back.data, vol.data)
        assert back.dims == vol.dims
        assert back.spacing == vol.spacing
        np.testing.assert_array_equal(back.affine, vol.affine)

    def test_write_is_deterministic(self, tmp_path):
        vol = f32_volume()
        a = tmp_path / "a.nii"
        b = tmp_path / "b.nii"
        write_nifti(vol, a)
        write_nifti(vol, b)
        assert a.read_bytes() == b.read_bytes()

    def test_x_fastest_on_disk(self, tmp_path):
        data = np.zeros((2, 2, 2))
        data[1, 0, 0] = 1.0  # second value in x-fastest order
        vol = Volume3D.from_spacing(data, 1.0)
        path = tmp_path / "order.nii"
        write_nifti(vol, path)
        raw = np.frombuffer(path.read_bytes()[352:], dtype="<f4")
        np.testing.assert_array_equal(raw, [0, 1, 0, 0, 0, 0, 0, 0])


class TestHeaderLayout:
    def test_sizeof_hdr_and_vox_offset(self, tmp_path):
        path = tmp_path / "h.nii"
        write_nifti(f32_volume(), path)
        raw = path.read_bytes()
        assert struct.unpack_from("<i", raw, 0)[0] == 348
        assert struct.unpack_from("<f", raw, 108)[0] == 352.0
        assert raw[344:348] == b"n+1\x00"

    def test_datatype_float32(self, tmp_path):
        path = tmp_path / "h.nii"
        write_nifti(f32_volume(), path)
        raw = path.read_bytes()
        assert struct.unpack_from("<h", raw, 70)[0] == 16
        assert struct.unpack_from("<h", raw, 72)[0] == 32

    def test_big_endian_input_detected(self, tmp_path):
        """A byte-swapped header (sizeof_hdr reads 1543569408) is accepted."""
        vol = f32_volume(dims=(3, 3, 3))
        path = tmp_path / "le.nii"
        write_nifti(vol, path)
        raw = bytearray(path.read_bytes())

        be = bytearray(len(raw))
        be[:] = raw
        struct.pack_into(">i", be, 0, 348)
        struct.pack_into(">8h", be, 40, *struct.unpack_from("<8h", raw, 40))
        struct.pack_into(">h", be, 70, 16)
        struct.pack_into(">h", be, 72, 32)
        struct.pack_into(">8f", be, 76, *struct.unpack_from("<8f", raw, 76))
        struct.pack_into(">f", be, 108, 352.0)
        struct.pack_into(">2f", be, 112, 1.0, 0.0)
        struct.pack_into(">2h", be, 252, 0, 1)
        for off in (280, 296, 312):
            struct.pack_into(">4f", be, off, *struct.unpack_from("<4f", raw, off))
        payload = np.frombuffer(raw[352:], dtype="<f4").astype(">f4").tobytes()
        be[352:] = payload
        assert struct.unpack_from("<i", be, 0)[0] == 1543569408

        swapped = tmp_path / "be.nii"
        swapped.write_bytes(bytes(be))
        back = read_nifti(swapped)
        np.testing.assert_array_equal(back.data, vol.data)
        assert back.spacing == vol.spacing

    def test_int16_with_scaling(self, tmp_path):
        path = tmp_path / "i16.nii"
        write_nifti(f32_volume(dims=(2, 2, 2)), path)
        raw = bytearray(path.read_bytes())
        values = np.array([0, 100, -5, 32000, 7, 8, 9, 10], dtype="<i2")
        struct.pack_into("<h", raw, 70, 4)  # datatype int16
        struct.pack_into("<h", raw, 72, 16)
        struct.pack_into("<2f", raw, 112, 0.5, 1.0)  # slope, inter
        out = bytes(raw[:352]) + values.tobytes()
        path.write_bytes(out)
        back = read_nifti(path)
        np.testing.assert_allclose(back.data.ravel(order="F"), values * 0.5 + 1.0)

    def test_pixdim_fallback_affine(self, tmp_path):
        path = tmp_path / "noform.nii"
        write_nifti(f32_volume(dims=(2, 2, 2)), path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<h", raw, 254, 0)  # sform_code = 0
        path.write_bytes(bytes(raw))
        back = read_nifti(path)
        np.testing.assert_array_equal(back.affine, np.diag([1.0, 1.5, 2.0, 1.0]))


class TestErrors:
    def write_raw(self, tmp_path, mutate):
        path = tmp_path / "bad.nii"
        write_nifti(f32_volume(dims=(2, 2, 2)), path)
        raw = bytearray(path.read_bytes())
        mutate(raw)
        path.write_bytes(bytes(raw))
        return path

    def test_bad_magic(self, tmp_path):
        path = self.write_raw(tmp_path, lambda raw: raw.__setitem__(slice(344, 348), b"ni2\x00"))
        with pytest.raises(NiftiParseError, match="magic"):
            read_nifti(path)

    def test_bad_sizeof_hdr(self, tmp_path):
        def mutate(raw):
            struct.pack_into("<i", raw, 0, 123)
        with pytest.raises(NiftiParseError, match="sizeof_hdr"):
            read_nifti(self.write_raw(tmp_path, mutate))

    def test_unsupported_datatype(self, tmp_path):
        def mutate(raw):
            struct.pack_into("<h", raw, 70, 64)  # float64 not in subset
        with pytest.raises(NiftiParseError, match="datatype"):
            read_nifti(self.write_raw(tmp_path, mutate))

    def test_wrong_dim0(self, tmp_path):
        def mutate(raw):
            struct.pack_into("<h", raw, 40, 4)
        with pytest.raises(NiftiParseError, match=r"dim\[0\]"):
            read_nifti(self.write_raw(tmp_path, mutate))

    def test_truncated_data(self, tmp_path):
        path = tmp_path / "trunc.nii"
        write_nifti(f32_volume(dims=(4, 4, 4)), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(NiftiParseError, match="data"):
            read_nifti(path)

    def test_short_file(self, tmp_path):
        path = tmp_path / "short.nii"
        path.write_bytes(b"x" * 100)
        with pytest.raises(NiftiParseError, match="sizeof_hdr"):
            read_nifti(path)
