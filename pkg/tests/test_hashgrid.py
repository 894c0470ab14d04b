"""Hash-grid encoder: level ladder, spatial hash, blending, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotsrr.hashgrid import (
    HashGridConfig,
    HashGridParams,
    encode,
    encode_backward,
    encode_backward_batch,
    encode_batch,
    hash_index,
    level_resolutions,
)


def small_config(**kw):
    defaults = dict(levels=4, table_size=2**10, features_per_entry=2, n_min=2, n_max=16)
    defaults.update(kw)
    return HashGridConfig(**defaults)


class TestLevelResolutions:
    def test_eleven_level_ladder(self):
        cfg = HashGridConfig(levels=11, n_min=16, n_max=512)
        expected = [16, 22, 32, 45, 64, 90, 128, 181, 256, 362, 512]
        assert level_resolutions(cfg).tolist() == expected

    def test_two_levels_hit_both_endpoints(self):
        cfg = small_config(levels=2, n_min=16, n_max=512)
        assert level_resolutions(cfg).tolist() == [16, 512]

    def test_single_level_degenerate(self):
        cfg = small_config(levels=1, n_min=8, n_max=512)
        assert level_resolutions(cfg).tolist() == [8]

    def test_endpoints_always_exact(self):
        for levels in (2, 3, 5, 8, 16):
            cfg = small_config(levels=levels, n_min=4, n_max=128)
            res = level_resolutions(cfg)
            assert res[0] == 4
            assert res[-1] == 128
            assert np.all(np.diff(res) >= 0)


class TestHashIndex:
    def test_origin_hashes_to_zero(self):
        assert hash_index((0, 0, 0), small_config()) == 0

    def test_first_axis_prime_mod_table(self):
        cfg = small_config(table_size=2**14)
        assert hash_index((1, 0, 0), cfg) == 73856093 % 2**14 == 13405

    def test_second_axis_prime_mod_table(self):
        cfg = small_config(table_size=2**14)
        assert hash_index((0, 1, 0), cfg) == 19349663 % 2**14 == 159

    @given(st.tuples(*[st.integers(min_value=0, max_value=2**20)] * 3))
    @settings(max_examples=200)
    def test_range_and_determinism(self, vertex):
        cfg = small_config(table_size=2**12)
        h = hash_index(vertex, cfg)
        assert 0 <= h < cfg.table_size
        assert h == hash_index(vertex, cfg)

    def test_table_size_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            small_config(table_size=1000)


class TestEncode:
    def test_output_length(self):
        cfg = small_config()
        params = HashGridParams.init(cfg, seed=0, dtype=np.float64)
        assert encode((0.3, 0.4, 0.5), cfg, params).shape == (4 * 2 + 3,)
        cfg2 = small_config(concat_aux=False)
        assert encode((0.3, 0.4, 0.5), cfg2, params).shape == (8,)

    def test_zero_tables_give_zero_features(self):
        cfg = small_config()
        params = HashGridParams(np.zeros((4, 2**10, 2)))
        out = encode((0.2, 0.9, 0.1), cfg, params)
        np.testing.assert_array_equal(out[:8], 0.0)
        np.testing.assert_allclose(out[8:], [0.2, 0.9, 0.1])

    def test_grid_vertex_reads_single_entry(self):
        """On a vertex the blend collapses to that vertex's table row."""
        cfg = small_config(levels=1, n_min=4, n_max=4, concat_aux=False)
        params = HashGridParams.init(cfg, seed=3, dtype=np.float64)
        point = (2 / 4, 3 / 4, 1 / 4)
        row = hash_index((2, 3, 1), cfg)
        np.testing.assert_allclose(encode(point, cfg, params), params.tables[0, row], atol=1e-12)

    def test_cell_center_blends_corners_equally(self):
        cfg = small_config(levels=1, n_min=2, n_max=2, concat_aux=False)
        params = HashGridParams.init(cfg, seed=1, dtype=np.float64)
        point = (0.25, 0.25, 0.25)  # center of the first cell at resolution 2
        rows = [hash_index((i, j, k), cfg) for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        expected = sum(params.tables[0, r] for r in rows) / 8.0
        np.testing.assert_allclose(encode(point, cfg, params), expected, atol=1e-12)

    def test_points_clamped_to_unit_cube(self):
        cfg = small_config()
        params = HashGridParams.init(cfg, seed=0, dtype=np.float64)
        np.testing.assert_allclose(
            encode((-0.5, 1.7, 0.3), cfg, params),
            encode((0.0, 1.0, 0.3), cfg, params),
            atol=1e-12,
        )

    def test_partition_of_unity(self):
        cfg = small_config(levels=6, n_min=3, n_max=48)
        params = HashGridParams.init(cfg, seed=0, dtype=np.float64)
        rng = np.random.default_rng(12)
        pts = rng.random((200, 3))
        _, cache = encode_batch(pts, cfg, params, want_cache=True)
        sums = cache.weights.sum(axis=2)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_linear_in_params(self):
        cfg = small_config()
        params = HashGridParams.init(cfg, seed=5, dtype=np.float64)
        scaled = HashGridParams(3.5 * params.tables)
        p = (0.11, 0.62, 0.93)
        a = encode(p, cfg, params)
        b = encode(p, cfg, scaled)
        np.testing.assert_allclose(b[:8], 3.5 * a[:8], atol=1e-12)
        np.testing.assert_allclose(b[8:], a[8:])  # aux coordinates unscaled

    def test_piecewise_continuity_within_cell(self):
        cfg = small_config(levels=3, n_min=2, n_max=8)
        params = HashGridParams.init(cfg, seed=2, dtype=np.float64)
        p = np.array([0.3101, 0.4201, 0.5301])
        delta = 1e-6
        a = encode(p, cfg, params)
        b = encode(p + delta, cfg, params)
        # Per-level slope is bounded by the cell resolution times the largest
        # feature magnitude (times corner count); the aux passthrough adds
        # exactly delta per axis.
        feat_bound = 3 * 8 * np.abs(params.tables).max() * np.max(level_resolutions(cfg)) * delta * 3
        assert np.linalg.norm(a[:6] - b[:6]) <= feat_bound
        np.testing.assert_allclose(b[6:] - a[6:], delta, atol=1e-12)


class TestEncodeBackward:
    def test_matches_finite_differences(self):
        """Central differences on touched entries agree to 1e-5 relative."""
        cfg = small_config(levels=3, table_size=2**8, n_min=2, n_max=8)
        rng = np.random.default_rng(21)
        params = HashGridParams(rng.normal(size=(3, 2**8, 2)))
        point = np.array([0.317, 0.553, 0.771])  # comfortably inside a cell
        upstream = rng.normal(size=6)
        grad = encode_backward(point, cfg, params, upstream)

        step = 1e-4
        touched = np.argwhere(np.abs(grad) > 0)
        assert touched.size > 0
        for l, t, f in touched[:40]:
            bumped = params.tables.copy()
            bumped[l, t, f] += step
            up = encode(point, cfg, HashGridParams(bumped))[:6] @ upstream
            bumped[l, t, f] -= 2 * step
            dn = encode(point, cfg, HashGridParams(bumped))[:6] @ upstream
            fd = (up - dn) / (2 * step)
            assert abs(fd - grad[l, t, f]) <= 1e-5 * max(1.0, abs(fd))

    def test_zero_upstream_gives_zero_gradient(self):
        cfg = small_config()
        params = HashGridParams.init(cfg, seed=0, dtype=np.float64)
        grad = encode_backward((0.4, 0.2, 0.6), cfg, params, np.zeros(8))
        np.testing.assert_array_equal(grad, 0.0)

    def test_vertex_point_concentrates_gradient(self):
        cfg = small_config(levels=1, n_min=4, n_max=4)
        params = HashGridParams.init(cfg, seed=0, dtype=np.float64)
        grad = encode_backward((0.25, 0.5, 0.75), cfg, params, np.array([1.0, 0.0]))
        row = hash_index((1, 2, 3), cfg)
        assert grad[0, row, 0] == pytest.approx(1.0, abs=1e-12)
        mask = np.ones_like(grad, dtype=bool)
        mask[0, row, 0] = False
        np.testing.assert_array_equal(grad[mask], 0.0)

    def test_gradient_consistency_with_directional_derivative(self):
        """Encoding is linear in the tables, so the Jacobian transpose rule
        <de, J dP> = <J^T de, dP> must hold to machine precision."""
        cfg = small_config(levels=4, table_size=2**9)
        rng = np.random.default_rng(33)
        params = HashGridParams(rng.normal(size=(4, 2**9, 2)))
        pts = rng.random((20, 3))
        upstream = rng.normal(size=(20, 8))
        feats, cache = encode_batch(pts, cfg, params, want_cache=True)
        grad = encode_backward_batch(cache, upstream, cfg)
        direction = rng.normal(size=params.tables.shape)
        feats2, _ = encode_batch(pts, cfg, HashGridParams(params.tables + direction))
        lhs = float(np.sum((feats2[:, :8] - feats[:, :8]) * upstream))
        rhs = float(np.sum(grad * direction))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_collisions_accumulate(self):
        """With a tiny table many corners share rows; gradients must sum."""
        cfg = small_config(levels=1, table_size=2, n_min=4, n_max=4)
        params = HashGridParams(np.zeros((1, 2, 2)))
        grad = encode_backward((0.4, 0.6, 0.3), cfg, params, np.array([1.0, 1.0]))
        np.testing.assert_allclose(grad.sum(axis=(0, 1)), [1.0, 1.0], atol=1e-12)
