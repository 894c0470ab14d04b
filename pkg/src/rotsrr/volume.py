"""Dense scalar volumes with voxel spacing and an index-to-world affine.

Conventions used throughout the package:

* ``data`` has shape ``(nx, ny, nz)``; ``data[i, j, k]`` is the sample at
  voxel index ``(i, j, k)``.  Serialization flattens with x fastest.
* Voxel index ``(0, 0, 0)`` addresses the *center* of the first voxel and
  maps through ``affine`` (homogeneous 4x4) to world millimeters.
* Sampling outside the grid clamps to the boundary value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


def apply_affine(affine: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a homogeneous 4x4 map to points of shape (..., 3).

    The result is divided by the homogeneous coordinate, so a matrix whose
    last row is (0, 0, 0, w) acts as a uniform scaling by 1/w.
    """
    affine = np.asarray(affine, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    out = pts @ affine[:3, :3].T + affine[:3, 3]
    w = pts @ affine[3, :3] + affine[3, 3]
    if pts.ndim == 1:
        return out / w
    return out / np.asarray(w)[..., np.newaxis]


def invert_affine(affine: np.ndarray) -> np.ndarray:
    return np.linalg.inv(np.asarray(affine, dtype=np.float64))


def compose(*affines: np.ndarray) -> np.ndarray:
    """Matrix product of affines, applied right to left like function composition."""
    out = np.eye(4)
    for a in affines:
        if a is None:
            continue
        out = out @ np.asarray(a, dtype=np.float64)
    return out


@dataclass(frozen=True)
class Volume3D:
    """Scalar 3D grid with voxel spacing (mm) and a voxel-to-world affine.

    Instances are immutable: the data and affine arrays are marked read-only
    after validation, so they can be shared freely between threads.
    ``intensity_range`` records the (min, max) of the source data before a
    normalization to [0, 1], when one was applied.
    """

    data: np.ndarray
    spacing: tuple
    affine: np.ndarray
    intensity_range: tuple | None = None

    def __post_init__(self):
        # Always copy so freezing the container can never freeze a caller's
        # working buffer.
        data = np.array(self.data, dtype=np.float64, order="C")
        if data.ndim != 3 or data.size == 0:
            raise ValueError(f"data must be a non-empty 3-D array, got shape {np.shape(self.data)}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        affine = np.array(self.affine, dtype=np.float64)
        if affine.shape != (4, 4):
            raise ValueError(f"affine must be 4x4, got shape {affine.shape}")
        if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
            raise ValueError("affine upper-left 3x3 block is not invertible")
        data.flags.writeable = False
        affine.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", affine)
        if self.intensity_range is not None:
            rng = tuple(float(v) for v in self.intensity_range)
            object.__setattr__(self, "intensity_range", rng)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @classmethod
    def from_spacing(cls, data, spacing, origin=None, intensity_range=None) -> "Volume3D":
        """Build a volume with an axis-aligned affine.

        ``origin`` is the world position of voxel (0, 0, 0); by default the
        grid is centered on the world origin.
        """
        data = np.asarray(data, dtype=np.float64)
        spacing = _spacing3(spacing)
        if origin is None:
            origin = tuple(-(n - 1) / 2.0 * s for n, s in zip(data.shape, spacing))
        affine = np.eye(4)
        affine[0, 0], affine[1, 1], affine[2, 2] = spacing
        affine[:3, 3] = origin
        return cls(data, spacing, affine, intensity_range)

    def with_data(self, data) -> "Volume3D":
        """Same grid, new samples."""
        return Volume3D(data, self.spacing, self.affine, self.intensity_range)

    def world_bounds(self):
        """(lo, hi) of the voxel-center bounding box in world coordinates."""
        corners = np.array(list(product(*[(0, n - 1) for n in self.dims])), dtype=np.float64)
        world = apply_affine(self.affine, corners)
        return world.min(axis=0), world.max(axis=0)

    def world_center(self):
        center_idx = (np.array(self.dims, dtype=np.float64) - 1.0) / 2.0
        return apply_affine(self.affine, center_idx)

    def normalized(self) -> "Volume3D":
        """Min-max rescale to [0, 1], recording the original range."""
        lo = float(self.data.min())
        hi = float(self.data.max())
        if hi > lo:
            data = (self.data - lo) / (hi - lo)
        else:
            data = np.zeros_like(self.data)
        return Volume3D(data, self.spacing, self.affine, intensity_range=(lo, hi))


@dataclass(frozen=True)
class GridSpec:
    """Output grid description: dims, isotropic-or-per-axis spacing, origin.

    ``origin`` is the world position of voxel (0, 0, 0); when omitted the
    grid is centered on the world origin.
    """

    dims: tuple
    spacing: tuple | float
    origin: tuple | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in (self.dims if np.iterable(self.dims) else (self.dims,) * 3))
        if len(dims) != 3 or any(n < 1 for n in dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", _spacing3(self.spacing))
        if self.origin is not None:
            object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    def to_affine(self) -> np.ndarray:
        origin = self.origin
        if origin is None:
            origin = tuple(-(n - 1) / 2.0 * s for n, s in zip(self.dims, self.spacing))
        affine = np.eye(4)
        affine[0, 0], affine[1, 1], affine[2, 2] = self.spacing
        affine[:3, 3] = origin
        return affine

    def template(self) -> Volume3D:
        """An all-zero volume on this grid."""
        return Volume3D(np.zeros(self.dims), self.spacing, self.to_affine())


def _spacing3(spacing):
    if np.iterable(spacing):
        out = tuple(float(s) for s in spacing)
        if len(out) != 3:
            raise ValueError(f"spacing must be scalar or length 3, got {spacing}")
        return out
    return (float(spacing),) * 3


def voxel_to_world(vol: Volume3D, index) -> np.ndarray:
    """Map (possibly fractional, possibly out-of-grid) voxel indices to world mm."""
    return apply_affine(vol.affine, index)


def world_to_voxel(vol: Volume3D, points) -> np.ndarray:
    return apply_affine(invert_affine(vol.affine), points)


def _corner_base(shape, cont_idx):
    """Lower corner indices and fractional offsets for trilinear interpolation.

    Out-of-grid coordinates are clamped to the boundary, so the resulting
    interpolation is still linear in the sample values.  Axes of length 1
    collapse to weight 1 on their single sample.
    """
    idx = np.atleast_2d(np.asarray(cont_idx, dtype=np.float64))
    base = np.empty(idx.shape, dtype=np.intp)
    frac = np.empty_like(idx)
    for a in range(3):
        n = shape[a]
        if n == 1:
            base[:, a] = 0
            frac[:, a] = 0.0
            continue
        c = np.clip(idx[:, a], 0.0, n - 1.0)
        b = np.minimum(np.floor(c), n - 2).astype(np.intp)
        base[:, a] = b
        frac[:, a] = c - b
    return base, frac


_CORNERS = np.array(list(product((0, 1), repeat=3)), dtype=np.intp)


def trilinear_gather(data: np.ndarray, cont_idx) -> np.ndarray:
    """Trilinear interpolation of ``data`` at continuous voxel indices (P, 3)."""
    base, frac = _corner_base(data.shape, cont_idx)
    out = np.zeros(base.shape[0], dtype=np.float64)
    for corner in _CORNERS:
        w = np.ones(base.shape[0], dtype=np.float64)
        ix = np.empty_like(base)
        for a in range(3):
            w *= frac[:, a] if corner[a] else (1.0 - frac[:, a])
            ix[:, a] = np.minimum(base[:, a] + corner[a], data.shape[a] - 1)
        out += w * data[ix[:, 0], ix[:, 1], ix[:, 2]]
    return out


def trilinear_scatter_add(buf: np.ndarray, cont_idx, values) -> None:
    """Transpose of :func:`trilinear_gather`: scatter-add values into ``buf``.

    Each value is distributed over the 8 surrounding voxels with the same
    weights the gather would use, which makes gather/scatter an exact
    adjoint pair (including the boundary clamp).
    """
    if not buf.flags["C_CONTIGUOUS"]:
        raise ValueError("scatter buffer must be C-contiguous")
    base, frac = _corner_base(buf.shape, cont_idx)
    values = np.asarray(values, dtype=np.float64)
    nx, ny, nz = buf.shape
    flat = buf.reshape(-1)
    for corner in _CORNERS:
        w = np.ones(base.shape[0], dtype=np.float64)
        ix = np.empty_like(base)
        for a in range(3):
            w *= frac[:, a] if corner[a] else (1.0 - frac[:, a])
            ix[:, a] = np.minimum(base[:, a] + corner[a], buf.shape[a] - 1)
        lin = (ix[:, 0] * ny + ix[:, 1]) * nz + ix[:, 2]
        flat += np.bincount(lin, weights=w * values, minlength=flat.size)


def resample_trilinear(vol: Volume3D, world_points) -> np.ndarray:
    """Sample a volume at world-space points with trilinear interpolation.

    Points outside the grid return the boundary-clamped value; sampling at a
    voxel center reproduces that voxel's stored value exactly.
    """
    return trilinear_gather(vol.data, world_to_voxel(vol, world_points))
