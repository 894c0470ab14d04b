"""Quantitative evaluation: back-projection relative error, Laplacian-variance
sharpness, and PSNR against a known ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import UndefinedMetricError
from .forward_model import project_like
from .volume import Volume3D


@dataclass(frozen=True)
class RoiSpec:
    """A 2D region on one slice: slice axis/index plus inclusive (lo, hi) corners."""

    axis: int
    index: int
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis}")
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 2 or len(hi) != 2 or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"need lo <= hi componentwise, got {self.lo}, {self.hi}")
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def extract(self, vol: Volume3D) -> np.ndarray:
        if not 0 <= self.index < vol.dims[self.axis]:
            raise ValueError(f"slice index {self.index} out of range for axis {self.axis}")
        plane = np.take(vol.data, self.index, axis=self.axis)
        for a in range(2):
            if not 0 <= self.lo[a] <= self.hi[a] < plane.shape[a]:
                raise ValueError(f"ROI box {self.lo}..{self.hi} exceeds slice shape {plane.shape}")
        return plane[self.lo[0]:self.hi[0] + 1, self.lo[1]:self.hi[1] + 1]


def laplacian_kernel(alpha: float = 0.2) -> np.ndarray:
    """The 3x3 alpha-parameterized discrete Laplacian; entries sum to zero."""
    a = float(alpha)
    return (4.0 / (a + 1.0)) * np.array(
        [
            [a / 4.0, (1.0 - a) / 4.0, a / 4.0],
            [(1.0 - a) / 4.0, -1.0, (1.0 - a) / 4.0],
            [a / 4.0, (1.0 - a) / 4.0, a / 4.0],
        ]
    )


def sharpness(vol: Volume3D, roi: RoiSpec, alpha: float = 0.2) -> float:
    """Variance of the Laplacian-filtered ROI (valid-region convolution).

    Higher values indicate stronger edges.  Constant and affine regions
    score zero because the kernel annihilates them.
    """
    region = roi.extract(vol)
    if region.shape[0] < 3 or region.shape[1] < 3:
        raise ValueError(f"ROI must be at least 3x3 for the Laplacian, got {region.shape}")
    filtered = convolve2d(region, laplacian_kernel(alpha), mode="valid")
    return float(np.var(filtered))


def relative_error(recon: Volume3D, views, slice_factor: int, motions=None) -> float:
    """Mean L1 back-projection error across views.

    The reconstruction is pushed through each view's acquisition operator
    and compared per view as |predicted - observed|_1 / |observed|_1.
    """
    views = list(views)
    motions = list(motions) if motions is not None else [None] * len(views)
    total = 0.0
    for view, motion in zip(views, motions):
        denom = float(np.abs(view.data).sum())
        if denom == 0.0:
            raise UndefinedMetricError("relative error undefined: a view has zero L1 norm")
        pred = project_like(recon, view, slice_factor, motion)
        total += float(np.abs(pred.data - view.data).sum()) / denom
    return total / len(views)


def psnr(recon: Volume3D, ground_truth: Volume3D) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1]-normalized volumes.

    Returns +inf for identical volumes.
    """
    if recon.dims != ground_truth.dims:
        raise ValueError(f"grid mismatch: {recon.dims} vs {ground_truth.dims}")
    if not np.allclose(recon.affine, ground_truth.affine, atol=1e-9):
        raise ValueError("grid mismatch: affines differ")
    mse = float(np.mean((recon.data - ground_truth.data) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def metric_record(metric: str, value: float, roi: RoiSpec | None = None,
                  view_count: int | None = None) -> dict:
    """One metrics-JSON row: {metric, value, roi?, view_count}."""
    row = {"metric": metric, "value": value}
    if roi is not None:
        row["roi"] = {"axis": roi.axis, "index": roi.index, "lo": list(roi.lo), "hi": list(roi.hi)}
    if view_count is not None:
        row["view_count"] = int(view_count)
    return row
