"""Deterministic synthetic phantom for simulation studies.

The phantom packs the structures that stress a super-resolution method:
nested ellipsoids with intensity steps, thin shells one to two voxels
thick, and a grid of one-voxel lines.  All features live inside the
cylinder inscribed about the x axis, so every rotated view keeps the whole
object in its field of view.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .volume import Volume3D


def _ellipsoid_q(u, center, semi):
    return sum(((u[a] - center[a]) / semi[a]) ** 2 for a in range(3))


def make_phantom(n: int = 96, spacing: float = 1.0, smooth_sigma: float = 0.5) -> Volume3D:
    """Build an ``n``-cubed phantom with intensities in [0, 1], centered on
    the world origin.

    ``smooth_sigma`` (voxels) applies a light blur so edges are not pure
    index-space steps; pass 0 for a piecewise-constant phantom.
    """
    half = (n - 1) / 2.0
    coords = (np.arange(n, dtype=np.float64) - half) / half
    u = np.meshgrid(coords, coords, coords, indexing="ij")
    voxel_u = 2.0 / (n - 1)  # one voxel step in normalized units

    data = np.zeros((n, n, n))

    # Head-like outer ellipsoid with two inner compartments.
    data[_ellipsoid_q(u, (0.0, 0.0, 0.0), (0.80, 0.72, 0.66)) <= 1.0] = 0.35
    data[_ellipsoid_q(u, (-0.15, 0.10, 0.05), (0.40, 0.30, 0.28)) <= 1.0] = 0.62
    data[_ellipsoid_q(u, (0.30, -0.25, -0.20), (0.22, 0.18, 0.16)) <= 1.0] = 0.15

    # Thin bright shells, roughly 1.5 voxels thick along the surface normal.
    q1 = np.sqrt(_ellipsoid_q(u, (0.05, 0.0, 0.0), (0.55, 0.47, 0.42)))
    data[np.abs(q1 - 1.0) <= 0.75 * voxel_u / 0.48] = 0.95
    q2 = np.sqrt(_ellipsoid_q(u, (0.35, 0.30, 0.25), (0.18, 0.18, 0.18)))
    data[np.abs(q2 - 1.0) <= 0.5 * voxel_u / 0.18] = 0.90

    # Line grid: one-voxel lines along x on a 6-voxel lattice, inside a box.
    jj, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    lattice2d = (jj % 6 == 0) & (kk % 6 == 0)
    box = (
        (u[0] >= -0.55) & (u[0] <= -0.15)
        & (u[1] >= -0.50) & (u[1] <= -0.05)
        & (u[2] >= -0.50) & (u[2] <= 0.00)
    )
    data[box & lattice2d[np.newaxis, :, :]] = 0.85

    if smooth_sigma > 0:
        data = ndimage.gaussian_filter(data, smooth_sigma)
    data = np.clip(data, 0.0, 1.0)
    return Volume3D.from_spacing(data, spacing)
