"""Classical comparison methods: tricubic fusion and least-squares SRR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateGeometryError, SolverError
from .forward_model import adjoint_like, project_like
from .volume import GridSpec, Volume3D, apply_affine, invert_affine


@dataclass(frozen=True)
class LsSrrConfig:
    output_grid: GridSpec
    lambda_reg: float = 1e-3
    max_iters: int = 200
    tol: float = 1e-8

    def __post_init__(self):
        if self.lambda_reg < 0:
            raise ValueError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


def tricubic_fuse(views, grid: GridSpec, motions=None) -> Volume3D:
    """Fuse views by tricubic interpolation onto the output grid.

    Every view is sampled at each output voxel's world position (after the
    view's estimated motion, when given); contributions from views whose
    grid contains the point are averaged with per-voxel weight
    normalization.  Voxels covered by no view fall back to the mean of the
    boundary-clamped samples.
    """
    views = list(views)
    if not views:
        raise ValueError("tricubic_fuse needs at least one view")
    motions = list(motions) if motions is not None else [None] * len(views)
    affine = grid.to_affine()
    ii, jj, kk = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in grid.dims], indexing="ij")
    idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    world = apply_affine(affine, idx)

    num = np.zeros(idx.shape[0])
    den = np.zeros(idx.shape[0])
    clamped_sum = np.zeros(idx.shape[0])
    for view, motion in zip(views, motions):
        chain = invert_affine(view.affine)
        if motion is not None:
            chain = chain @ motion.inverse_affine()
        src = apply_affine(chain, world)
        vals = ndimage.map_coordinates(view.data, src.T, order=3, mode="nearest")
        n = np.asarray(view.dims, dtype=np.float64)
        inside = np.all((src > -1e-9) & (src < n - 1 + 1e-9), axis=1)
        num += np.where(inside, vals, 0.0)
        den += inside
        clamped_sum += vals
    if not np.any(den):
        raise DegenerateGeometryError("no view covers any output voxel")
    data = np.where(den > 0, num / np.maximum(den, 1.0), clamped_sum / len(views))
    return Volume3D(data.reshape(grid.dims), grid.spacing, affine)


def _gradient_normal(y: np.ndarray) -> np.ndarray:
    """D^T D with forward differences (valid region) along the three axes."""
    out = np.zeros_like(y)
    for a in range(3):
        if y.shape[a] < 2:
            continue
        d = np.diff(y, axis=a)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        out[tuple(lo)] -= d
        out[tuple(hi)] += d
    return out


def normal_operator(views, slice_factor: int, config: LsSrrConfig, motions=None):
    """The SPD operator of the normal equations, as a callable on grid arrays."""
    motions = list(motions) if motions is not None else [None] * len(views)
    template = config.output_grid.template()

    def apply(y: np.ndarray) -> np.ndarray:
        vol = Volume3D(y, template.spacing, template.affine)
        out = np.zeros_like(y)
        for view, motion in zip(views, motions):
            pred = project_like(vol, view, slice_factor, motion)
            out += adjoint_like(pred.data, view, slice_factor, template, motion)
        if config.lambda_reg > 0:
            out += config.lambda_reg * _gradient_normal(y)
        return out

    return apply


@dataclass
class LsSrrResult:
    volume: Volume3D
    residuals: np.ndarray  # relative residual per iteration, starting at 1
    iterations: int
    converged: bool


def ls_srr(views, slice_factor: int, config: LsSrrConfig, motions=None) -> LsSrrResult:
    """Regularized least-squares reconstruction by a conjugate Krylov solve.

    Solves (sum_v H_v^T H_v + lambda D^T D) y = sum_v H_v^T LR_v from a zero
    initial iterate with the conjugate-residual recurrence (the
    minimal-residual form of conjugate gradients for SPD operators, chosen
    because its residual norm is nonincreasing by construction), stopping at
    the residual tolerance, a roundoff plateau, or the iteration cap.  The
    output is clamped to [0, 1] (normalized intensity units).  Raises
    SolverError if the residual grows for 10 consecutive iterations.
    """
    views = list(views)
    motions_l = list(motions) if motions is not None else [None] * len(views)
    template = config.output_grid.template()
    apply_a = normal_operator(views, slice_factor, config, motions_l)

    b = np.zeros(config.output_grid.dims)
    for view, motion in zip(views, motions_l):
        b += adjoint_like(view.data, view, slice_factor, template, motion)

    bnorm = float(np.sqrt(np.vdot(b, b).real))
    if bnorm == 0.0:
        return LsSrrResult(template, np.array([0.0]), 0, True)

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    ar = apply_a(r)
    ap = ar.copy()
    rar = float(np.vdot(r, ar).real)
    residuals = [1.0]
    converged = False
    grow = 0
    stall = 0
    best = 1.0
    it = 0
    for it in range(1, config.max_iters + 1):
        apap = float(np.vdot(ap, ap).real)
        if apap <= 0.0 or rar <= 0.0:
            break
        alpha = rar / apap
        x += alpha * p
        r -= alpha * ap
        rel = float(np.sqrt(np.vdot(r, r).real)) / bnorm
        if rel > residuals[-1]:
            grow += 1
            if grow >= 10:
                raise SolverError(
                    "residual grew for 10 consecutive iterations",
                    last_iterate=Volume3D(x, template.spacing, template.affine),
                    residuals=np.array(residuals + [rel]),
                )
        else:
            grow = 0
        residuals.append(rel)
        if rel <= config.tol:
            converged = True
            break
        # Roundoff plateau: stop once the residual makes no real progress.
        if rel < best * (1.0 - 1e-6):
            best = rel
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                break
        ar = apply_a(r)
        rar_new = float(np.vdot(r, ar).real)
        beta = rar_new / rar
        p = r + beta * p
        ap = ar + beta * ap
        rar = rar_new

    vol = Volume3D(np.clip(x, 0.0, 1.0), template.spacing, template.affine)
    return LsSrrResult(vol, np.asarray(residuals), it, converged)
