"""Slice exports and report figures.

PNG slice export is deterministic (min-max windowed 8-bit grayscale via
Pillow); the matplotlib figures are the human-facing side of the report
path and accompany the delimited/JSON outputs written by the CLI.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .volume import Volume3D

AXIS_NAMES = {"x": 0, "y": 1, "z": 2}


def axis_id(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXIS_NAMES[axis.lower()]
        except KeyError:
            raise ValueError(f"axis must be x, y, z or 0..2, got {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be x, y, z or 0..2, got {axis!r}")
    return int(axis)


def slice_array(vol: Volume3D, axis, index: int) -> np.ndarray:
    """Extract one slice oriented (rows, cols) = (second axis, first axis)."""
    a = axis_id(axis)
    if not 0 <= index < vol.dims[a]:
        raise ValueError(f"slice index {index} out of range for axis {a} with {vol.dims[a]} slices")
    return np.take(vol.data, index, axis=a).T


def export_slice_png(vol: Volume3D, axis, index: int, path) -> None:
    """Write a grayscale 8-bit PNG of one slice, min-max windowed."""
    plane = slice_array(vol, axis, index)
    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        scaled = (plane - lo) / (hi - lo)
    else:
        scaled = np.full_like(plane, 0.5)
    img = np.round(scaled * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def save_loss_figure(history, path) -> None:
    """Loss-history curves (mse, tv, total) on a log scale."""
    hist = np.asarray(history)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.semilogy(hist[:, 0], hist[:, 3], label="total", lw=1.2)
    ax.semilogy(hist[:, 0], hist[:, 1], label="mse", lw=0.9, alpha=0.8)
    if np.any(hist[:, 2] > 0):
        ax.semilogy(hist[:, 0], hist[:, 2], label="tv", lw=0.9, alpha=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_slice_comparison(named_volumes: dict, axis, index: int, path) -> None:
    """Side-by-side center slices of several volumes on a shared gray scale."""
    names = list(named_volumes)
    fig, axes = plt.subplots(1, len(names), figsize=(3.0 * len(names), 3.2), squeeze=False)
    for ax, name in zip(axes[0], names):
        ax.imshow(slice_array(named_volumes[name], axis, index), cmap="gray",
                  vmin=0.0, vmax=1.0, origin="lower")
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_error_map(recon: Volume3D, reference: Volume3D, axis, index: int, path) -> None:
    """Absolute-difference map of one slice against a reference volume."""
    err = np.abs(slice_array(recon, axis, index) - slice_array(reference, axis, index))
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    im = ax.imshow(err, cmap="inferno", origin="lower")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title("absolute error", fontsize=9)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
