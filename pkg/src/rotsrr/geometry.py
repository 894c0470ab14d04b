"""View geometry for rotated thick-slice acquisitions.

The acquisition rotates about the first (x, phase-encode) world axis, so a
view's affine rotates the (y, z) plane about a configurable in-plane center
and leaves x untouched.  Angles are degrees at every interface and radians
only inside the trig calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def min_rotations(anisotropy: float) -> int:
    """Smallest number of rotated stacks that supports isotropic recovery.

    For a through-plane/in-plane voxel ratio ``a >= 1`` the bound is
    ceil(pi/2 * a).  An anisotropy of 5 gives 8 views; callers may still
    choose to acquire fewer and accept an underdetermined reconstruction.
    """
    a = float(anisotropy)
    if not a >= 1.0:
        raise ValueError(f"anisotropy must be >= 1, got {anisotropy}")
    return int(math.ceil(math.pi / 2.0 * a))


def _rot_x(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _rot_y(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def _rot_z(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class RigidTransform:
    """Rigid world-space motion: rotation (degrees) plus translation (mm).

    The rotation is composed intrinsically in the order x, then y, then z,
    i.e. ``R = Rx @ Ry @ Rz``; rotations are about the world origin.
    """

    angles_deg: tuple = (0.0, 0.0, 0.0)
    translation_mm: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        object.__setattr__(self, "translation_mm", tuple(float(t) for t in self.translation_mm))
        if len(self.angles_deg) != 3 or len(self.translation_mm) != 3:
            raise ValueError("RigidTransform needs 3 angles and 3 translations")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def rotation(self) -> np.ndarray:
        ax, ay, az = self.angles_deg
        return _rot_x(ax) @ _rot_y(ay) @ _rot_z(az)

    def as_affine(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation()
        out[:3, 3] = self.translation_mm
        return out

    def inverse_affine(self) -> np.ndarray:
        r = self.rotation()
        out = np.eye(4)
        out[:3, :3] = r.T
        out[:3, 3] = -r.T @ np.asarray(self.translation_mm)
        return out

    def is_identity(self, tol: float = 0.0) -> bool:
        return all(abs(a) <= tol for a in self.angles_deg) and all(
            abs(t) <= tol for t in self.translation_mm
        )


@dataclass(frozen=True)
class ViewGeometry:
    """One thick-slice acquisition.

    ``angle_deg`` rotates the view about the fixed x axis; ``center`` is the
    (c_y, c_z) rotation center in mm; ``slice_factor`` is the through-plane
    to in-plane spacing ratio; ``scale`` is the homogeneous scale entry of
    the view affine; ``motion`` is an optional rigid perturbation applied on
    top of the nominal view rotation.
    """

    angle_deg: float = 0.0
    center: tuple = (0.0, 0.0)
    slice_factor: int = 1
    scale: float = 1.0
    motion: RigidTransform | None = None

    def __post_init__(self):
        object.__setattr__(self, "angle_deg", float(self.angle_deg) % 360.0)
        center = tuple(float(c) for c in self.center)
        if len(center) != 2:
            raise ValueError(f"center must be (c_y, c_z), got {self.center}")
        object.__setattr__(self, "center", center)
        if int(self.slice_factor) != self.slice_factor or self.slice_factor < 1:
            raise ValueError(f"slice_factor must be an integer >= 1, got {self.slice_factor}")
        object.__setattr__(self, "slice_factor", int(self.slice_factor))
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))


def view_affine(geom: ViewGeometry) -> np.ndarray:
    """Homogeneous matrix mapping view-local coordinates into the shared frame.

    Rotation acts on the (y, z) plane about ``geom.center``; the homogeneous
    scale sits in the (4, 4) entry.  The motion perturbation is *not* part of
    this matrix; see :func:`effective_view_affine`.
    """
    a = math.radians(geom.angle_deg)
    c, s = math.cos(a), math.sin(a)
    cy, cz = geom.center
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, cy * (1.0 - c) + cz * s],
            [0.0, s, c, cz * (1.0 - c) - cy * s],
            [0.0, 0.0, 0.0, geom.scale],
        ],
        dtype=np.float64,
    )


def effective_view_affine(geom: ViewGeometry) -> np.ndarray:
    """View affine with the motion perturbation composed on the world side."""
    nominal = view_affine(geom)
    if geom.motion is None:
        return nominal
    return geom.motion.as_affine() @ nominal
