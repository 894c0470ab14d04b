"""Training loop for the continuous reconstruction field.

Each step samples a batch of observed thick-slice voxels, evaluates the
field at the sub-slice points along every voxel's (motion-corrected) slice
normal, averages them to emulate the acquisition profile, and minimizes the
mean squared mismatch plus an optional total-variation penalty, with Adam.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import TrainingDivergedError
from .field import FieldModel
from .forward_model import slice_offsets
from .geometry import ViewGeometry
from .hashgrid import HashGridConfig
from .mlp import MlpConfig
from .volume import GridSpec, Volume3D, apply_affine, compose

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    iterations: int = 10000
    batch_size: int = 2**16
    lambda_tv: float = 0.0
    tv_samples: int | None = None  # None -> batch_size
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 100
    precision: str = "f32"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.lambda_tv < 0:
            raise ValueError(f"lambda_tv must be >= 0, got {self.lambda_tv}")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]


@dataclass(frozen=True)
class ReconJob:
    """Everything needed to reconstruct: data, geometry, model and loop knobs."""

    views: tuple
    geometries: tuple
    slice_factor: int
    output_grid: GridSpec
    hash_config: HashGridConfig = HashGridConfig()
    mlp_config: MlpConfig | None = None
    train_config: TrainConfig = TrainConfig()
    motion_transforms: tuple | None = None  # estimated, one slot per view

    def __post_init__(self):
        views = tuple(self.views)
        geoms = tuple(self.geometries)
        if not views:
            raise ValueError("ReconJob needs at least one view")
        if len(views) != len(geoms):
            raise ValueError("every view needs a geometry")
        if any(not isinstance(v, Volume3D) for v in views):
            raise TypeError("views must be Volume3D instances")
        if any(not isinstance(g, ViewGeometry) for g in geoms):
            raise TypeError("geometries must be ViewGeometry instances")
        sp = self.output_grid.spacing
        if not (sp[0] == sp[1] == sp[2]):
            raise ValueError(f"output grid spacing must be isotropic, got {sp}")
        motions = self.motion_transforms
        motions = tuple(motions) if motions is not None else (None,) * len(views)
        if len(motions) != len(views):
            raise ValueError("motion_transforms must have one slot per view")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "geometries", geoms)
        object.__setattr__(self, "slice_factor", int(self.slice_factor))
        object.__setattr__(self, "motion_transforms", motions)

    def with_motion(self, motions) -> "ReconJob":
        return replace(self, motion_transforms=tuple(motions))


@dataclass
class SampleBank:
    """Flattened observed voxels: normalized sub-slice coordinates and values."""

    coords01: np.ndarray  # (n_voxels, slice_factor, 3)
    values: np.ndarray  # (n_voxels,)
    view_ids: np.ndarray  # (n_voxels,)

    @property
    def n_voxels(self) -> int:
        return self.values.shape[0]


def build_sample_bank(job: ReconJob, field: FieldModel) -> SampleBank:
    """Precompute normalized field coordinates for every observed voxel.

    Uses each view's recorded affine composed with its estimated motion
    transform, so the bank reflects whatever correction the job carries.
    """
    offsets = slice_offsets(job.slice_factor)
    coords, values, ids = [], [], []
    for vid, (view, motion) in enumerate(zip(job.views, job.motion_transforms)):
        world_map = compose(motion.as_affine() if motion else None, view.affine)
        ii, jj, kk = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in view.dims], indexing="ij")
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        per_voxel = np.empty((idx.shape[0], len(offsets), 3), dtype=field.dtype)
        for t, dk in enumerate(offsets):
            sub = idx.copy()
            sub[:, 2] += dk
            per_voxel[:, t, :] = field.normalize_world(apply_affine(world_map, sub))
        coords.append(per_voxel)
        values.append(view.data.ravel().astype(field.dtype))
        ids.append(np.full(idx.shape[0], vid, dtype=np.int32))
    return SampleBank(
        np.concatenate(coords, axis=0),
        np.concatenate(values, axis=0),
        np.concatenate(ids, axis=0),
    )


def recon_loss(field: FieldModel, bank: SampleBank, indices):
    """Data-consistency loss over a batch of observed voxels.

    The field is evaluated at each voxel's sub-slice points, averaged along
    the slice normal, and compared to the observed value with mean squared
    error.  Returns ``(loss, grads)`` with gradients over every parameter.
    """
    indices = np.asarray(indices)
    n = indices.shape[0]
    alpha = bank.coords01.shape[1]
    pts = bank.coords01[indices].reshape(n * alpha, 3)
    out, cache = field.forward01(pts, want_cache=True)
    pred = out.reshape(n, alpha).mean(axis=1)
    resid = pred - bank.values[indices]
    loss = float(np.mean(resid**2))
    upstream = np.repeat(2.0 * resid / (n * alpha), alpha).astype(field.dtype)
    grads = field.backward01(cache, upstream)
    return loss, grads


def tv_loss(field: FieldModel, grid: GridSpec, voxel_ids):
    """Total-variation penalty at sampled grid locations.

    The gradient is estimated with forward finite differences of one voxel
    along each axis, divided by the spacing; differences that would leave
    the grid are dropped (valid-region convention).  Returns the mean L1
    norm of the estimated gradients together with the parameter gradients.
    """
    ids = np.asarray(voxel_ids, dtype=np.float64)
    m = ids.shape[0]
    affine = grid.to_affine()
    spacing = np.asarray(grid.spacing)
    dims = np.asarray(grid.dims)

    base_world = apply_affine(affine, ids)
    pts = [base_world]
    valid = []
    for a in range(3):
        off = ids.copy()
        off[:, a] += 1.0
        valid.append(ids[:, a] + 1 <= dims[a] - 1)
        pts.append(apply_affine(affine, off))
    pts01 = field.normalize_world(np.concatenate(pts, axis=0))
    out, cache = field.forward01(pts01, want_cache=True)
    f_base = out[:m]
    loss = 0.0
    upstream = np.zeros(4 * m, dtype=np.float64)
    for a in range(3):
        d = (out[(a + 1) * m:(a + 2) * m] - f_base) / spacing[a]
        d = np.where(valid[a], d, 0.0)
        loss += float(np.abs(d).sum())
        s = np.sign(d) * valid[a] / (m * spacing[a])
        upstream[(a + 1) * m:(a + 2) * m] = s
        upstream[:m] -= s
    loss /= m
    grads = field.backward01(cache, upstream.astype(field.dtype))
    return loss, grads


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; arrays are updated in place."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
    return params, state


def train(job: ReconJob, callback=None):
    """Fit the field to the job's views; returns (field, history).

    ``history`` has one row per iteration: (iteration, mse, tv, total).
    Deterministic for a fixed seed.  Raises TrainingDivergedError with a
    diagnostic snapshot if the loss stops being finite.
    """
    cfg = job.train_config
    grid = job.output_grid
    template = grid.template()
    bounds = template.world_bounds()
    field = FieldModel.create(
        job.hash_config, bounds, seed=cfg.seed, dtype=cfg.dtype, mlp_config=job.mlp_config
    )
    bank = build_sample_bank(job, field)
    params = field.parameters()
    state = AdamState.init(params)
    rng = np.random.default_rng(cfg.seed)
    n_tv = cfg.tv_samples if cfg.tv_samples is not None else cfg.batch_size
    history = np.empty((cfg.iterations, 4), dtype=np.float64)

    for it in range(cfg.iterations):
        batch = rng.integers(0, bank.n_voxels, size=cfg.batch_size)
        mse, grads = recon_loss(field, bank, batch)
        tv = 0.0
        if cfg.lambda_tv > 0.0:
            ids = np.stack([rng.integers(0, d, size=n_tv) for d in grid.dims], axis=1)
            tv, tv_grads = tv_loss(field, grid, ids)
            for k in grads:
                grads[k] = grads[k] + cfg.lambda_tv * tv_grads[k]
        total = mse + cfg.lambda_tv * tv
        if not np.isfinite(total):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it}",
                snapshot={"iteration": it, "mse": mse, "tv": tv, "history": history[:it].copy()},
            )
        adam_step(params, grads, state, cfg)
        history[it] = (it, mse, tv, total)
        if callback is not None and (it % cfg.log_every == 0 or it == cfg.iterations - 1):
            callback(it, mse, tv, total)
    return field, history


def render_volume(field: FieldModel, grid: GridSpec) -> Volume3D:
    """Sample the trained field at every voxel center of the output grid.

    Values are clamped to [0, 1] at render time; the field itself is
    unconstrained during training.
    """
    affine = grid.to_affine()
    ii, jj, kk = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in grid.dims], indexing="ij")
    idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    values = field.evaluate_world(apply_affine(affine, idx))
    data = np.clip(values, 0.0, 1.0).reshape(grid.dims)
    return Volume3D(data, grid.spacing, affine)


def write_loss_csv(history, path) -> None:
    """Loss history as CSV with columns iteration, mse, tv, total."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse", "tv", "total"])
        for row in np.asarray(history):
            writer.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3]))])
