"""Tricubic fusion and conjugate-gradient least-squares SRR."""

import numpy as np
import pytest

from helpers import protocol_views, simulate_phantom
from rotsrr.baselines import LsSrrConfig, ls_srr, normal_operator, tricubic_fuse
from rotsrr.forward_model import AcquisitionSpec, apply_forward, simulate_views
from rotsrr.geometry import ViewGeometry
from rotsrr.volume import GridSpec, Volume3D


class TestTricubicFuse:
    def test_identity_geometry_is_identity_resample(self):
        rng = np.random.default_rng(0)
        hr = Volume3D.from_spacing(rng.random((6, 6, 6)), 1.0)
        geom = ViewGeometry(angle_deg=0.0, slice_factor=1)
        spec = AcquisitionSpec((geom,), 1.0, 1)
        view = apply_forward(hr, geom, spec)
        fused = tricubic_fuse([view], GridSpec((6, 6, 6), 1.0))
        np.testing.assert_allclose(fused.data, hr.data, atol=1e-9)

    def test_constant_views_give_constant(self):
        hr = Volume3D.from_spacing(np.full((8, 8, 8), 0.4), 1.0)
        geoms = protocol_views(3, 60.0, 2)
        spec = AcquisitionSpec(geoms, 1.0, 2)
        views = simulate_views(hr, spec)
        fused = tricubic_fuse(views, GridSpec((8, 8, 8), 1.0))
        np.testing.assert_allclose(fused.data, 0.4, atol=1e-9)

    def test_linear_ramp_recovered_exactly_in_interior(self):
        """Cubic interpolation reproduces linear functions away from edges."""
        n = 32
        x = np.arange(n, dtype=float)
        ramp = np.broadcast_to(x[:, None, None], (n, n, n)) / (n - 1)
        hr = Volume3D.from_spacing(np.array(ramp), 1.0)
        geoms = protocol_views(2, 90.0, 2)
        spec = AcquisitionSpec(geoms, 1.0, 2)
        views = simulate_views(hr, spec)
        fused = tricubic_fuse(views, GridSpec((n, n, n), 1.0))
        sl = slice(12, 20)
        np.testing.assert_allclose(fused.data[sl, sl, sl], hr.data[sl, sl, sl], atol=1e-6)

    def test_empty_views_rejected(self):
        with pytest.raises(ValueError):
            tricubic_fuse([], GridSpec((4, 4, 4), 1.0))


class TestNormalOperator:
    def test_positive_semidefinite(self):
        hr, geoms, spec, views = simulate_phantom(n=8, n_views=3, slice_factor=2,
                                                  angle_step=60.0)
        cfg = LsSrrConfig(output_grid=GridSpec((8, 8, 8), 1.0), lambda_reg=1e-3)
        apply_a = normal_operator(views, 2, cfg)
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.normal(size=(8, 8, 8))
            quad = float(np.vdot(apply_a(x), x))
            assert quad >= -1e-10 * float(np.vdot(x, x))

    def test_symmetry(self):
        hr, geoms, spec, views = simulate_phantom(n=8, n_views=2, slice_factor=2,
                                                  angle_step=90.0)
        cfg = LsSrrConfig(output_grid=GridSpec((8, 8, 8), 1.0), lambda_reg=1e-2)
        apply_a = normal_operator(views, 2, cfg)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(8, 8, 8))
        y = rng.normal(size=(8, 8, 8))
        lhs = float(np.vdot(apply_a(x), y))
        rhs = float(np.vdot(x, apply_a(y)))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


class TestLsSrr:
    def test_identity_system_solved_in_one_step(self):
        rng = np.random.default_rng(3)
        hr = Volume3D.from_spacing(rng.uniform(0.1, 0.9, (6, 6, 6)), 1.0)
        geom = ViewGeometry(angle_deg=0.0, slice_factor=1)
        spec = AcquisitionSpec((geom,), 1.0, 1)
        view = apply_forward(hr, geom, spec)
        cfg = LsSrrConfig(output_grid=GridSpec((6, 6, 6), 1.0), lambda_reg=0.0,
                          max_iters=50, tol=1e-12)
        result = ls_srr([view], 1, cfg)
        assert result.iterations == 1
        np.testing.assert_allclose(result.volume.data, hr.data, atol=1e-10)

    def test_minimum_norm_box_average_pair(self):
        """One observation c of a 2-voxel box average: CG lands on (c, c)."""
        c = 0.62
        hr = Volume3D.from_spacing(np.full((1, 1, 2), c), 1.0)
        geom = ViewGeometry(angle_deg=0.0, slice_factor=2)
        spec = AcquisitionSpec((geom,), 1.0, 2)
        view = apply_forward(hr, geom, spec)
        assert view.dims == (1, 1, 1)
        np.testing.assert_allclose(view.data, c)
        cfg = LsSrrConfig(output_grid=GridSpec((1, 1, 2), 1.0), lambda_reg=0.0,
                          max_iters=50, tol=1e-12)
        result = ls_srr([view], 2, cfg)
        np.testing.assert_allclose(result.volume.data.ravel(), [c, c], atol=1e-8)

    def test_residual_nonincreasing_on_phantom_job(self):
        hr, geoms, spec, views = simulate_phantom(n=16, n_views=4, slice_factor=2,
                                                  angle_step=45.0)
        cfg = LsSrrConfig(output_grid=GridSpec((16, 16, 16), 1.0), lambda_reg=1e-3,
                          max_iters=60, tol=1e-10)
        result = ls_srr(views, 2, cfg)
        res = result.residuals
        # Nonincreasing within 1e-8 slack on the relative-residual scale.
        assert np.all(res[1:] <= res[:-1] + 1e-8)
        assert res[-1] < 0.02

    def test_fully_determined_system_reproduced(self):
        rng = np.random.default_rng(5)
        hr = Volume3D.from_spacing(rng.uniform(0.2, 0.8, (8, 8, 8)), 1.0)
        geom = ViewGeometry(angle_deg=0.0, slice_factor=1)
        spec = AcquisitionSpec((geom,), 1.0, 1)
        view = apply_forward(hr, geom, spec)
        cfg = LsSrrConfig(output_grid=GridSpec((8, 8, 8), 1.0), lambda_reg=0.0,
                          max_iters=100, tol=1e-10)
        result = ls_srr([view], 1, cfg)
        assert result.converged
        np.testing.assert_allclose(result.volume.data, hr.data, atol=1e-8)

    def test_config_validation(self):
        grid = GridSpec((4, 4, 4), 1.0)
        with pytest.raises(ValueError):
            LsSrrConfig(output_grid=grid, lambda_reg=-1.0)
        with pytest.raises(ValueError):
            LsSrrConfig(output_grid=grid, max_iters=0)
        with pytest.raises(ValueError):
            LsSrrConfig(output_grid=grid, tol=0.0)
