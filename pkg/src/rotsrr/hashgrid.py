"""Multi-resolution hash-grid feature encoder with exact parameter gradients.

Coordinates in [0,1]^3 are scaled by a ladder of grid resolutions that grows
exponentially from ``n_min`` to ``n_max``.  At each level the 8 vertices of
the enclosing cell are hashed into a fixed-size feature table and blended
with trilinear weights; the per-level features are concatenated and the raw
coordinate is optionally appended as an auxiliary input.  The encoding is
linear in the table entries, so the backward pass is a pure scatter-add of
the blend weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

# A well-studied spatial-hash prime triple; all three are prime and pairwise
# unrelated, which keeps collisions incoherent across levels.
DEFAULT_PRIMES = (73856093, 19349663, 83492791)


@dataclass(frozen=True)
class HashGridConfig:
    """Level count, table size, feature width and resolution range."""

    levels: int = 11
    table_size: int = 2**19
    features_per_entry: int = 2
    n_min: int = 16
    n_max: int = 512
    primes: tuple = DEFAULT_PRIMES
    concat_aux: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        t = int(self.table_size)
        if t < 1 or (t & (t - 1)) != 0:
            raise ValueError(f"table_size must be a power of two, got {self.table_size}")
        if self.features_per_entry < 1:
            raise ValueError(f"features_per_entry must be >= 1, got {self.features_per_entry}")
        if not (1 <= self.n_min <= self.n_max):
            raise ValueError(f"need 1 <= n_min <= n_max, got {self.n_min}, {self.n_max}")
        if len(self.primes) != 3:
            raise ValueError("primes must be three integers")
        object.__setattr__(self, "levels", int(self.levels))
        object.__setattr__(self, "table_size", t)
        object.__setattr__(self, "features_per_entry", int(self.features_per_entry))
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "n_max", int(self.n_max))
        object.__setattr__(self, "primes", tuple(int(p) for p in self.primes))

    @property
    def growth_factor(self) -> float:
        if self.levels == 1:
            return 1.0
        return float(np.exp((np.log(self.n_max) - np.log(self.n_min)) / (self.levels - 1)))

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_entry + (3 if self.concat_aux else 0)


@dataclass
class HashGridParams:
    """Trainable feature tables, one per level, stacked as (L, T, F)."""

    tables: np.ndarray

    @classmethod
    def init(cls, config: HashGridConfig, seed: int, dtype=np.float32) -> "HashGridParams":
        rng = np.random.default_rng(seed)
        shape = (config.levels, config.table_size, config.features_per_entry)
        return cls(rng.uniform(-1e-4, 1e-4, size=shape).astype(dtype))

    def validate(self, config: HashGridConfig):
        expected = (config.levels, config.table_size, config.features_per_entry)
        if self.tables.shape != expected:
            raise ValueError(f"tables shape {self.tables.shape} does not match config {expected}")
        if not np.all(np.isfinite(self.tables)):
            raise ValueError("tables contain non-finite values")


def level_resolutions(config: HashGridConfig) -> np.ndarray:
    """Per-level grid resolutions, growing exponentially from n_min to n_max."""
    if config.levels == 1:
        return np.array([config.n_min], dtype=np.int64)
    step = (np.log(config.n_max) - np.log(config.n_min)) / (config.levels - 1)
    exact = np.exp(np.log(config.n_min) + step * np.arange(config.levels))
    # Guard fp roundoff so exact powers of the growth factor land on integers.
    return np.floor(exact + 1e-9).astype(np.int64)


_CORNERS = np.array(list(product((0, 1), repeat=3)), dtype=np.int64)


def _hash_vertices(vidx: np.ndarray, config: HashGridConfig) -> np.ndarray:
    """Spatial hash of integer vertices (..., 3) into [0, table_size)."""
    mask = np.uint64(config.table_size - 1)
    v = vidx.astype(np.uint64)
    h = v[..., 0] * np.uint64(config.primes[0])
    h ^= v[..., 1] * np.uint64(config.primes[1])
    h ^= v[..., 2] * np.uint64(config.primes[2])
    return (h & mask).astype(np.intp)


def hash_index(grid_vertex, config: HashGridConfig) -> int:
    """Hash one non-negative integer grid vertex; deterministic across runs."""
    v = np.asarray(grid_vertex, dtype=np.int64).reshape(1, 3)
    return int(_hash_vertices(v, config)[0])


@dataclass
class EncodeCache:
    """Gather bookkeeping reused by the backward pass."""

    indices: np.ndarray  # (L, P, 8) table rows
    weights: np.ndarray  # (L, P, 8) trilinear blend weights
    points01: np.ndarray  # (P, 3) clamped inputs


def encode_batch(points, config: HashGridConfig, params: HashGridParams, want_cache: bool = False):
    """Encode points of shape (P, 3); values are clamped to [0,1]^3 first.

    Returns ``(features, cache)`` with features of shape
    (P, levels * features_per_entry [+ 3]); ``cache`` is None unless
    requested.
    """
    dtype = params.tables.dtype
    pts = np.clip(np.asarray(points, dtype=dtype), 0.0, 1.0)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (P, 3), got {np.shape(points)}")
    res = level_resolutions(config).astype(dtype)
    x = pts[np.newaxis, :, :] * res[:, np.newaxis, np.newaxis]  # (L, P, 3)
    i0 = np.floor(x)
    frac = x - i0

    vidx = i0[:, :, np.newaxis, :].astype(np.int64) + _CORNERS[np.newaxis, np.newaxis, :, :]
    idx = _hash_vertices(vidx, config)  # (L, P, 8)

    one = np.asarray(1.0, dtype=dtype)
    w = np.ones(idx.shape, dtype=dtype)
    for a in range(3):
        fa = frac[:, :, np.newaxis, a]
        w = w * np.where(_CORNERS[np.newaxis, np.newaxis, :, a] == 1, fa, one - fa)

    lsel = np.arange(config.levels)[:, np.newaxis, np.newaxis]
    gathered = params.tables[lsel, idx]  # (L, P, 8, F)
    level_feats = (w[..., np.newaxis] * gathered).sum(axis=2)  # (L, P, F)
    feats = level_feats.transpose(1, 0, 2).reshape(pts.shape[0], -1)
    if config.concat_aux:
        feats = np.concatenate([feats, pts], axis=1)
    cache = EncodeCache(idx, w, pts) if want_cache else None
    return feats, cache


def encode_backward_batch(cache: EncodeCache, upstream, config: HashGridConfig) -> np.ndarray:
    """Gradient of the encoded features w.r.t. the tables, for a batch.

    ``upstream`` has shape (P, levels * features_per_entry); gradients of the
    auxiliary coordinates, when present, are not table gradients and must be
    stripped by the caller.  Colliding corners accumulate by summation.
    """
    L, t, f = config.levels, config.table_size, config.features_per_entry
    up = np.asarray(upstream)
    up = up.reshape(up.shape[0], L, f).transpose(1, 0, 2)  # (L, P, F)
    contrib = cache.weights[..., np.newaxis] * up[:, :, np.newaxis, :]  # (L, P, 8, F)
    lin = (np.arange(L, dtype=np.intp)[:, np.newaxis, np.newaxis] * t + cache.indices).ravel()
    grad = np.empty((L * t, f), dtype=np.float64)
    for j in range(f):
        grad[:, j] = np.bincount(lin, weights=contrib[..., j].ravel().astype(np.float64), minlength=L * t)
    return grad.reshape(L, t, f).astype(cache.weights.dtype)


def encode(point, config: HashGridConfig, params: HashGridParams) -> np.ndarray:
    """Encode a single point in [0,1]^3."""
    feats, _ = encode_batch(np.asarray(point, dtype=np.float64).reshape(1, 3), config, params)
    return feats[0]


def encode_backward(point, config: HashGridConfig, params: HashGridParams, upstream) -> np.ndarray:
    """Table gradient for a single point given the upstream feature gradient."""
    _, cache = encode_batch(
        np.asarray(point, dtype=np.float64).reshape(1, 3), config, params, want_cache=True
    )
    up = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    expected = config.levels * config.features_per_entry
    if up.shape[1] != expected:
        raise ValueError(f"upstream must have length {expected}, got {up.shape[1]}")
    return encode_backward_batch(cache, up, config)
