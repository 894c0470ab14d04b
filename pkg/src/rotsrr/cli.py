"""Command-line surface wiring the pipeline stages together.

Subcommands: simulate, register, reconstruct, baseline, evaluate, slice.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import LsSrrConfig, ls_srr, tricubic_fuse
from .config import (
    JobConfig,
    Manifest,
    ManifestView,
    load_job_config,
    load_manifest,
    save_manifest,
)
from .errors import ConfigError
from .forward_model import AcquisitionSpec, simulate_views
from .geometry import RigidTransform, min_rotations
from .metrics import RoiSpec, metric_record, psnr, relative_error, sharpness
from .nifti import read_nifti, write_nifti
from .phantom import make_phantom
from .registration import estimate_view_motions, load_transforms, register_rigid, save_transforms
from .report import (
    export_slice_png,
    save_error_map,
    save_loss_figure,
    save_slice_comparison,
)
from .trainer import ReconJob, render_volume, train, write_loss_csv
from .volume import GridSpec


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="rotsrr",
        description="Isotropic reconstruction from rotated thick-slice volumes.",
    )
    parser.add_argument("--version", action="version", version=f"rotsrr {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="override every stage seed")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="fixed-order reductions (always on in this implementation; flag kept for pipelines)",
    )
    parser.add_argument("--precision", choices=("f32", "f64"), default=None,
                        help="training float width")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="ground truth -> rotated thick-slice views")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--phantom", type=int, metavar="N", help="generate an N^3 phantom")
    src.add_argument("--gt", metavar="FILE", help="NIfTI ground-truth volume")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--views", type=int, default=None, help="view count (default: minimum for the factor)")
    p.add_argument("--angle-step", type=float, default=None, help="degrees between views (default: 180/views)")
    p.add_argument("--factor", type=int, default=5, help="through-plane/in-plane ratio")
    p.add_argument("--spacing", type=float, default=None, help="in-plane spacing mm (default: ground-truth spacing)")
    p.add_argument("--snr", type=float, default=None, help="foreground SNR for added noise")
    p.add_argument("--motion", action="append", default=[], metavar="VIEW:rx,ry,rz[,tx,ty,tz]",
                   help="inject rigid motion into one view (repeatable)")

    p = sub.add_parser("register", help="estimate per-view rigid motion")
    p.add_argument("--acq", required=True, help="acquisition manifest JSON")
    p.add_argument("--out", required=True, help="transforms JSON")
    p.add_argument("--method", choices=("model", "pairwise"), default="model")
    p.add_argument("--passes", type=int, default=2, help="template refinement passes (model method)")

    p = sub.add_parser("reconstruct", help="fit the neural field and render the volume")
    p.add_argument("--acq", required=True)
    p.add_argument("--out", required=True, help="output NIfTI")
    p.add_argument("--transforms", default=None, help="estimated motion JSON from `register`")
    p.add_argument("--config", default=None, help="job config JSON")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--lambda-tv", type=float, default=None)
    p.add_argument("--grid", type=int, default=None, help="output grid size (cubic)")
    p.add_argument("--loss-csv", default=None)
    p.add_argument("--loss-figure", default=None)

    p = sub.add_parser("baseline", help="classical reconstructions")
    p.add_argument("--acq", required=True)
    p.add_argument("--method", choices=("tricubic", "ls-srr"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--transforms", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--lambda-reg", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("evaluate", help="metrics (and report figures) for a reconstruction")
    p.add_argument("--acq", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--gt", default=None, help="ground truth NIfTI (PSNR)")
    p.add_argument("--transforms", default=None)
    p.add_argument("--roi", action="append", default=[],
                   metavar="AXIS,INDEX,LO0,LO1,HI0,HI1", help="sharpness ROI (repeatable)")
    p.add_argument("--out", required=True, help="metrics JSON")
    p.add_argument("--csv", default=None, help="metrics CSV alongside the JSON")
    p.add_argument("--figures", default=None, help="directory for report figures")

    p = sub.add_parser("slice", help="export one slice as PNG")
    p.add_argument("--volume", required=True)
    p.add_argument("--axis", default="z")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    return parser


def _parse_motion_specs(specs):
    out = {}
    for spec in specs:
        try:
            view_part, nums = spec.split(":")
            values = [float(x) for x in nums.split(",")]
        except ValueError as exc:
            raise _UsageError(f"bad --motion value {spec!r}: {exc}") from None
        if len(values) not in (3, 6):
            raise _UsageError(f"--motion needs 3 or 6 numbers, got {len(values)} in {spec!r}")
        angles = tuple(values[:3])
        trans = tuple(values[3:]) if len(values) == 6 else (0.0, 0.0, 0.0)
        out[int(view_part)] = RigidTransform(angles, trans)
    return out


def _cmd_simulate(args) -> int:
    if args.phantom is not None:
        gt = make_phantom(args.phantom)
    else:
        gt = read_nifti(args.gt).normalized()
    spacing = args.spacing if args.spacing is not None else gt.spacing[0]
    n_views = args.views if args.views is not None else min_rotations(args.factor)
    step = args.angle_step if args.angle_step is not None else 180.0 / n_views
    motions = _parse_motion_specs(args.motion)
    seed = args.seed if args.seed is not None else 0

    manifest_views = []
    geoms = []
    for i in range(n_views):
        motion = motions.get(i)
        view = ManifestView(id=i, file=f"view_{i:03d}.nii", angle_deg=step * i, motion=motion)
        manifest_views.append(view)
        geoms.append(view.geometry(args.factor))
    spec = AcquisitionSpec(tuple(geoms), spacing, args.factor, noise_snr=args.snr, seed=seed)

    os.makedirs(args.out_dir, exist_ok=True)
    volumes = simulate_views(gt, spec)
    for view, vol in zip(manifest_views, volumes):
        write_nifti(vol, os.path.join(args.out_dir, view.file))
    write_nifti(gt, os.path.join(args.out_dir, "gt.nii"))
    manifest = Manifest(
        in_plane_spacing=spacing,
        slice_factor=args.factor,
        views=manifest_views,
        noise_snr=args.snr,
        seed=seed,
        ground_truth="gt.nii",
        base_dir=args.out_dir,
    )
    save_manifest(manifest, os.path.join(args.out_dir, "acquisition.json"))
    print(f"wrote {n_views} views + gt.nii + acquisition.json to {args.out_dir}")
    return 0


def _load_views(manifest: Manifest):
    return [read_nifti(manifest.view_path(v)) for v in manifest.views]


def _default_grid(manifest: Manifest, views, grid_arg) -> GridSpec:
    if grid_arg is not None:
        return GridSpec((grid_arg,) * 3, manifest.in_plane_spacing)
    # Cover the reference view's in-plane field of view isotropically.
    n = max(views[0].dims[0], views[0].dims[1], views[0].dims[2] * manifest.slice_factor)
    return GridSpec((n,) * 3, manifest.in_plane_spacing)


def _motions_for(manifest: Manifest, transforms_path):
    if transforms_path is None:
        return None
    table = load_transforms(transforms_path)
    return [table.get(v.id) for v in manifest.views]


def _cmd_register(args) -> int:
    manifest = load_manifest(args.acq)
    views = _load_views(manifest)
    grid = _default_grid(manifest, views, None)
    seed = args.seed if args.seed is not None else manifest.seed
    if args.method == "model":
        table = estimate_view_motions(
            views, manifest.slice_factor, grid, passes=args.passes, seed=seed
        )
        transforms = {manifest.views[i].id: t for i, t in table.items()}
    else:
        transforms = {}
        for view, mview in list(zip(views, manifest.views))[1:]:
            transforms[mview.id] = register_rigid(view, views[0])
    save_transforms(args.out, transforms)
    print(f"wrote transforms for {len(transforms)} views to {args.out}")
    return 0


def _cmd_reconstruct(args) -> int:
    manifest = load_manifest(args.acq)
    job_cfg = load_job_config(args.config)
    views = _load_views(manifest)
    geoms = tuple(v.geometry(manifest.slice_factor) for v in manifest.views)
    grid = job_cfg.output_grid(
        _default_grid(manifest, views, args.grid).dims, manifest.in_plane_spacing
    )
    if args.grid is not None:
        grid = GridSpec((args.grid,) * 3, manifest.in_plane_spacing)
    motions = _motions_for(manifest, args.transforms)
    train_cfg = job_cfg.train_config(
        iterations=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        lambda_tv=args.lambda_tv,
        seed=args.seed,
        precision=args.precision,
    )
    hash_cfg = job_cfg.hash_config()
    job = ReconJob(
        views=tuple(views),
        geometries=geoms,
        slice_factor=manifest.slice_factor,
        output_grid=grid,
        hash_config=hash_cfg,
        mlp_config=job_cfg.mlp_config(hash_cfg.output_dim) if job_cfg.mlp else None,
        train_config=train_cfg,
        motion_transforms=motions,
    )

    def progress(it, mse, tv, total):
        print(f"iter {it:6d}  mse {mse:.3e}  tv {tv:.3e}  total {total:.3e}", flush=True)

    field, history = train(job, callback=progress)
    recon = render_volume(field, grid)
    write_nifti(recon, args.out)
    if args.loss_csv:
        write_loss_csv(history, args.loss_csv)
    if args.loss_figure:
        save_loss_figure(history, args.loss_figure)
    print(f"wrote reconstruction to {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    manifest = load_manifest(args.acq)
    job_cfg = load_job_config(args.config)
    views = _load_views(manifest)
    grid = job_cfg.output_grid(
        _default_grid(manifest, views, args.grid).dims, manifest.in_plane_spacing
    )
    if args.grid is not None:
        grid = GridSpec((args.grid,) * 3, manifest.in_plane_spacing)
    motions = _motions_for(manifest, args.transforms)
    if args.method == "tricubic":
        out = tricubic_fuse(views, grid, motions=motions)
    else:
        doc = dict(job_cfg.ls_srr)
        if args.lambda_reg is not None:
            doc["lambda_reg"] = args.lambda_reg
        if args.max_iters is not None:
            doc["max_iters"] = args.max_iters
        if args.tol is not None:
            doc["tol"] = args.tol
        cfg = LsSrrConfig(output_grid=grid, **doc)
        result = ls_srr(views, manifest.slice_factor, cfg, motions=motions)
        out = result.volume
        print(f"solver: {result.iterations} iterations, final residual {result.residuals[-1]:.3e}")
    write_nifti(out, args.out)
    print(f"wrote {args.method} baseline to {args.out}")
    return 0


def _parse_roi(text) -> RoiSpec:
    try:
        parts = text.split(",")
        axis = parts[0] if parts[0] in ("x", "y", "z") else int(parts[0])
        index, lo0, lo1, hi0, hi1 = (int(v) for v in parts[1:])
    except (ValueError, IndexError) as exc:
        raise _UsageError(f"bad --roi value {text!r}: {exc}") from None
    axis_num = {"x": 0, "y": 1, "z": 2}.get(axis, axis)
    return RoiSpec(axis=axis_num, index=index, lo=(lo0, lo1), hi=(hi0, hi1))


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.acq)
    views = _load_views(manifest)
    recon = read_nifti(args.recon)
    motions = _motions_for(manifest, args.transforms)
    records = []
    re_val = relative_error(recon, views, manifest.slice_factor, motions=motions)
    records.append(metric_record("relative_error", re_val, view_count=len(views)))
    gt = None
    gt_path = args.gt if args.gt is not None else manifest.ground_truth_path()
    if gt_path is not None and os.path.exists(gt_path):
        gt = read_nifti(gt_path)
        if gt.dims == recon.dims:
            records.append(metric_record("psnr", psnr(recon, gt), view_count=len(views)))
    for roi_text in args.roi:
        roi = _parse_roi(roi_text)
        records.append(metric_record("sharpness", sharpness(recon, roi), roi=roi))

    with open(args.out, "w") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("metric,value\n")
            for rec in records:
                fh.write(f"{rec['metric']},{rec['value']!r}\n")
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        axis, index = 0, recon.dims[0] // 2
        if gt is not None and gt.dims == recon.dims:
            save_slice_comparison({"ground truth": gt, "reconstruction": recon},
                                  axis, index, os.path.join(args.figures, "comparison.png"))
            save_error_map(recon, gt, axis, index, os.path.join(args.figures, "error_map.png"))
        else:
            save_slice_comparison({"reconstruction": recon}, axis, index,
                                  os.path.join(args.figures, "comparison.png"))
    for rec in records:
        roi_txt = f" roi={rec['roi']}" if "roi" in rec else ""
        print(f"{rec['metric']}: {rec['value']:.6g}{roi_txt}")
    return 0


def _cmd_slice(args) -> int:
    vol = read_nifti(args.volume)
    export_slice_png(vol, args.axis, args.index, args.out)
    print(f"wrote slice to {args.out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "register": _cmd_register,
    "reconstruct": _cmd_reconstruct,
    "baseline": _cmd_baseline,
    "evaluate": _cmd_evaluate,
    "slice": _cmd_slice,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rotsrr: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --version/--help
        code = exc.code if isinstance(exc.code, int) else 0
        return code
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"rotsrr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
