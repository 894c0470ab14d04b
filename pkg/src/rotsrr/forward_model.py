"""Thick-slice acquisition operator and its exact adjoint.

A view observes the object through three steps: rotate the sampling grid
about the x axis, average over a rectangular slice profile along the rotated
slice normal, and downsample to the thick-slice grid.  The profile is
realized as ``slice_factor`` equally spaced point samples spanning exactly
one slice thickness, centered on each output voxel, so the operator is a
sparse linear map and its transpose can be computed exactly by scatter-add.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import ViewGeometry, view_affine
from .volume import (
    Volume3D,
    apply_affine,
    compose,
    invert_affine,
    trilinear_gather,
    trilinear_scatter_add,
)


@dataclass(frozen=True)
class AcquisitionSpec:
    """Multi-view acquisition protocol shared by simulation and reconstruction."""

    views: tuple
    in_plane_spacing: float
    slice_factor: int
    noise_snr: float | None = None
    seed: int = 0

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("AcquisitionSpec needs at least one view")
        if any(not isinstance(v, ViewGeometry) for v in views):
            raise TypeError("views must be ViewGeometry instances")
        if int(self.slice_factor) < 1:
            raise ValueError(f"slice_factor must be >= 1, got {self.slice_factor}")
        if any(v.slice_factor != int(self.slice_factor) for v in views):
            raise ValueError("all views must share the acquisition slice_factor")
        if self.noise_snr is not None and not self.noise_snr > 0:
            raise ValueError(f"noise_snr must be positive or None, got {self.noise_snr}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "in_plane_spacing", float(self.in_plane_spacing))
        object.__setattr__(self, "slice_factor", int(self.slice_factor))
        object.__setattr__(self, "seed", int(self.seed))


def slice_offsets(slice_factor: int) -> np.ndarray:
    """Sub-sample offsets along the slice normal, in output-voxel index units.

    The offsets put ``slice_factor`` equally spaced samples across one slice
    thickness, centered on the voxel center (a discrete rectangular profile
    whose weights sum to one).
    """
    t = np.arange(slice_factor, dtype=np.float64)
    return (t + 0.5) / slice_factor - 0.5


def view_grid(hr: Volume3D, geom: ViewGeometry, spec: AcquisitionSpec):
    """Derive the thick-slice grid a view acquires over ``hr``'s field of view.

    The grid lives in the view's local frame and spans the same box as the
    volume's field of view; slices stack along the local z axis.  Returns
    ``(dims, nominal_affine)`` where the affine maps grid indices to world
    coordinates *without* the motion perturbation (the scanner's belief).
    """
    lo, hi = hr.world_bounds()
    half = np.asarray(hr.spacing) / 2.0
    edge_lo = lo - half
    edge_hi = hi + half
    extent = edge_hi - edge_lo
    s = spec.in_plane_spacing
    step = np.array([s, s, spec.slice_factor * s], dtype=np.float64)
    dims = tuple(max(1, int(round(extent[a] / step[a]))) for a in range(3))
    local = np.eye(4)
    local[0, 0], local[1, 1], local[2, 2] = step
    local[:3, 3] = edge_lo + step / 2.0
    return dims, view_affine(geom) @ local


def _index_grid(dims) -> np.ndarray:
    ii, jj, kk = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")
    return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)


def project_to_grid(hr: Volume3D, dims, world_affine, slice_factor: int):
    """Forward-project ``hr`` onto a thick-slice grid (mean over the profile).

    Returns ``(data, covered)`` where ``covered`` is True when at least one
    sub-sample landed inside the volume's index box.
    """
    idx = _index_grid(dims)
    inv = invert_affine(hr.affine)
    chain = inv @ np.asarray(world_affine, dtype=np.float64)
    n = np.asarray(hr.dims, dtype=np.float64)
    acc = np.zeros(idx.shape[0], dtype=np.float64)
    covered = False
    for dk in slice_offsets(slice_factor):
        sub = idx.copy()
        sub[:, 2] += dk
        hr_idx = apply_affine(chain, sub)
        if not covered:
            inside = np.all((hr_idx > -0.5) & (hr_idx < n - 0.5), axis=1)
            covered = bool(inside.any())
        acc += trilinear_gather(hr.data, hr_idx)
    acc /= slice_factor
    return acc.reshape(dims), covered


def scatter_to_volume(lr_data, world_affine, slice_factor: int, hr_template: Volume3D) -> np.ndarray:
    """Transpose of :func:`project_to_grid`: scatter thick-slice values back.

    Each sub-sample deposits ``value / slice_factor`` through the trilinear
    weights used by the forward pass, making the pair an exact adjoint.
    """
    lr_data = np.asarray(lr_data, dtype=np.float64)
    idx = _index_grid(lr_data.shape)
    inv = invert_affine(hr_template.affine)
    chain = inv @ np.asarray(world_affine, dtype=np.float64)
    out = np.zeros(hr_template.dims, dtype=np.float64)
    vals = lr_data.ravel() / slice_factor
    for dk in slice_offsets(slice_factor):
        sub = idx.copy()
        sub[:, 2] += dk
        trilinear_scatter_add(out, apply_affine(chain, sub), vals)
    return out


def apply_forward(hr: Volume3D, geom: ViewGeometry, spec: AcquisitionSpec) -> Volume3D:
    """Acquire one thick-slice view of ``hr``.

    The returned volume records the *nominal* affine (rotation only); the
    motion perturbation, when present, affects where the object was sampled
    but is unknown to the scanner and therefore absent from the metadata.
    """
    dims, nominal = view_grid(hr, geom, spec)
    world = compose(geom.motion.as_affine() if geom.motion else None, nominal)
    data, covered = project_to_grid(hr, dims, world, spec.slice_factor)
    if not covered:
        raise DegenerateGeometryError(
            f"view at {geom.angle_deg} deg has no overlap with the volume support"
        )
    s = spec.in_plane_spacing
    return Volume3D(data, (s, s, spec.slice_factor * s), nominal)


def apply_adjoint(lr: Volume3D, geom: ViewGeometry, spec: AcquisitionSpec, hr_template: Volume3D) -> Volume3D:
    """Apply the transpose of the view operator to a thick-slice volume."""
    dims, nominal = view_grid(hr_template, geom, spec)
    if tuple(lr.dims) != dims:
        raise ValueError(f"thick-slice dims {lr.dims} do not match the derived grid {dims}")
    world = compose(geom.motion.as_affine() if geom.motion else None, nominal)
    data = scatter_to_volume(lr.data, world, spec.slice_factor, hr_template)
    return Volume3D(data, hr_template.spacing, hr_template.affine)


def project_like(hr: Volume3D, view: Volume3D, slice_factor: int, motion=None) -> Volume3D:
    """Forward-project ``hr`` onto an existing view's recorded grid.

    This is the back-projection direction used for data-consistency checks:
    it predicts what the view should have observed given a reconstruction.
    ``motion``, when given, is the estimated rigid transform for this view.
    """
    world = compose(motion.as_affine() if motion else None, view.affine)
    data, covered = project_to_grid(hr, view.dims, world, slice_factor)
    if not covered:
        raise DegenerateGeometryError("view grid has no overlap with the volume support")
    return Volume3D(data, view.spacing, view.affine)


def adjoint_like(values, view: Volume3D, slice_factor: int, hr_template: Volume3D, motion=None) -> np.ndarray:
    """Transpose of :func:`project_like` acting on raw view-shaped values."""
    world = compose(motion.as_affine() if motion else None, view.affine)
    return scatter_to_volume(values, world, slice_factor, hr_template)


def add_noise(vol: Volume3D, snr: float | None, seed: int) -> Volume3D:
    """Add i.i.d. Gaussian noise at the requested foreground SNR.

    sigma = mean(foreground) / snr with foreground defined as voxels above
    5% of the volume maximum.  ``snr`` of None or +inf disables noise and
    returns the input unchanged.  Deterministic for a given seed.
    """
    if snr is None or np.isinf(snr):
        return vol
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    peak = float(vol.data.max())
    if peak <= 0:
        sigma = 0.0
    else:
        fg = vol.data[vol.data > 0.05 * peak]
        sigma = float(fg.mean()) / float(snr) if fg.size else 0.0
    rng = np.random.default_rng(seed)
    noisy = vol.data + rng.normal(0.0, sigma, size=vol.dims)
    return Volume3D(noisy, vol.spacing, vol.affine, vol.intensity_range)


def simulate_views(hr: Volume3D, spec: AcquisitionSpec) -> list:
    """Simulate the full multi-view acquisition, in acquisition order.

    Each view applies its own motion perturbation; noise, when enabled, is
    seeded per view (seed XOR view index) so per-view work can be
    parallelized without changing the result.
    """
    out = []
    for i, geom in enumerate(spec.views):
        lr = apply_forward(hr, geom, spec)
        if spec.noise_snr is not None:
            lr = add_noise(lr, spec.noise_snr, spec.seed ^ i)
        out.append(lr)
    return out
