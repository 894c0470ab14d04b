"""Strict JSON documents: the acquisition manifest and the job config.

Unknown keys are rejected everywhere so a typo cannot silently fall back to
a default.  All paths inside a document are resolved relative to the
document's own directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import RigidTransform, ViewGeometry
from .hashgrid import HashGridConfig
from .mlp import MlpConfig
from .trainer import TrainConfig
from .volume import GridSpec


def _check_keys(doc: dict, allowed, where: str):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _motion_from(doc, where):
    if doc is None:
        return None
    _check_keys(doc, ("angles_deg", "translation_mm"), where)
    return RigidTransform(
        tuple(doc.get("angles_deg", (0.0, 0.0, 0.0))),
        tuple(doc.get("translation_mm", (0.0, 0.0, 0.0))),
    )


def _motion_to(motion):
    if motion is None:
        return None
    return {"angles_deg": list(motion.angles_deg), "translation_mm": list(motion.translation_mm)}


@dataclass
class ManifestView:
    id: int
    file: str
    angle_deg: float
    center: tuple = (0.0, 0.0)
    scale: float = 1.0
    motion: RigidTransform | None = None  # true injected motion (simulation only)

    def geometry(self, slice_factor: int) -> ViewGeometry:
        return ViewGeometry(
            angle_deg=self.angle_deg,
            center=self.center,
            slice_factor=slice_factor,
            scale=self.scale,
            motion=self.motion,
        )


@dataclass
class Manifest:
    """Acquisition record written by `simulate` and consumed downstream."""

    in_plane_spacing: float
    slice_factor: int
    views: list
    noise_snr: float | None = None
    seed: int = 0
    ground_truth: str | None = None
    base_dir: str = "."

    def view_path(self, view: ManifestView) -> str:
        return os.path.join(self.base_dir, view.file)

    def ground_truth_path(self) -> str | None:
        if self.ground_truth is None:
            return None
        return os.path.join(self.base_dir, self.ground_truth)


def load_manifest(path) -> Manifest:
    with open(path) as fh:
        doc = json.load(fh)
    _check_keys(
        doc,
        ("in_plane_spacing", "slice_factor", "noise_snr", "seed", "ground_truth", "views"),
        "manifest",
    )
    if "views" not in doc or not doc["views"]:
        raise ConfigError("manifest must list at least one view")
    views = []
    for i, v in enumerate(doc["views"]):
        where = f"manifest views[{i}]"
        _check_keys(v, ("id", "file", "angle_deg", "center", "scale", "motion"), where)
        for key in ("id", "file", "angle_deg"):
            if key not in v:
                raise ConfigError(f"{where} is missing required key {key!r}")
        views.append(
            ManifestView(
                id=int(v["id"]),
                file=str(v["file"]),
                angle_deg=float(v["angle_deg"]),
                center=tuple(v.get("center", (0.0, 0.0))),
                scale=float(v.get("scale", 1.0)),
                motion=_motion_from(v.get("motion"), where + " motion"),
            )
        )
    return Manifest(
        in_plane_spacing=float(doc["in_plane_spacing"]),
        slice_factor=int(doc["slice_factor"]),
        views=views,
        noise_snr=doc.get("noise_snr"),
        seed=int(doc.get("seed", 0)),
        ground_truth=doc.get("ground_truth"),
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "in_plane_spacing": manifest.in_plane_spacing,
        "slice_factor": manifest.slice_factor,
        "noise_snr": manifest.noise_snr,
        "seed": manifest.seed,
        "ground_truth": manifest.ground_truth,
        "views": [
            {
                "id": v.id,
                "file": v.file,
                "angle_deg": v.angle_deg,
                "center": list(v.center),
                "scale": v.scale,
                "motion": _motion_to(v.motion),
            }
            for v in manifest.views
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


_HASH_KEYS = ("levels", "table_size", "features_per_entry", "n_min", "n_max", "primes", "concat_aux")
_MLP_KEYS = ("hidden_width", "hidden_layers", "omega_first", "omega_hidden", "activation")
_TRAIN_KEYS = (
    "learning_rate", "iterations", "batch_size", "lambda_tv", "tv_samples",
    "beta1", "beta2", "eps", "seed", "log_every", "precision",
)
_LSSRR_KEYS = ("lambda_reg", "max_iters", "tol")
_OUTPUT_KEYS = ("dims", "spacing", "origin")


@dataclass
class JobConfig:
    """Reconstruction options: model, training loop, solver, output grid."""

    hash_grid: dict
    mlp: dict
    train: dict
    ls_srr: dict
    output: dict

    def hash_config(self) -> HashGridConfig:
        doc = dict(self.hash_grid)
        if "primes" in doc:
            doc["primes"] = tuple(doc["primes"])
        return HashGridConfig(**doc)

    def mlp_config(self, input_dim: int) -> MlpConfig:
        return MlpConfig(input_dim=input_dim, **self.mlp)

    def train_config(self, **overrides) -> TrainConfig:
        doc = dict(self.train)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**doc)

    def output_grid(self, default_dims, default_spacing) -> GridSpec:
        doc = dict(self.output)
        dims = doc.get("dims", default_dims)
        spacing = doc.get("spacing", default_spacing)
        origin = doc.get("origin")
        return GridSpec(tuple(dims) if hasattr(dims, "__len__") else dims, spacing, origin)


def load_job_config(path=None) -> JobConfig:
    if path is None:
        return JobConfig({}, {}, {}, {}, {})
    with open(path) as fh:
        doc = json.load(fh)
    _check_keys(doc, ("hash_grid", "mlp", "train", "ls_srr", "output"), "job config")
    sections = {}
    for name, allowed in (
        ("hash_grid", _HASH_KEYS),
        ("mlp", _MLP_KEYS),
        ("train", _TRAIN_KEYS),
        ("ls_srr", _LSSRR_KEYS),
        ("output", _OUTPUT_KEYS),
    ):
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"job config section {name!r} must be an object")
        _check_keys(section, allowed, f"job config section {name!r}")
        sections[name] = section
    return JobConfig(
        sections["hash_grid"], sections["mlp"], sections["train"],
        sections["ls_srr"], sections["output"],
    )
