"""Camera intrinsics, rotations, homographies, and their Jacobians.

Conventions
-----------
- Pixel coordinates: x right (columns), y down (rows), integer centers.
- Camera rotations are parameterized by three angles (pitch theta_x,
  yaw theta_y, roll theta_z), composed in the fixed order
  ``R = Rz(theta_z) @ Ry(theta_y) @ Rx(theta_x)``.  For the small angles
  of camera shake the composition order only matters at O(theta^2), but
  fixing it keeps results reproducible.
- A pure-rotation camera motion induces the homography ``H = K R K^-1``
  on the image plane; homographies are stored normalized (H[2,2] = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_ANGLE_RAD = math.pi / 4  # well beyond any plausible camera-shake rotation

_SINGULAR_EPS = 1e-12


class SingularProjectionError(ValueError):
    """Projective denominator vanished at the requested point."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal length in pixels and principal point."""

    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (math.isfinite(self.focal) and self.focal > 0):
            raise ValueError(f"focal length must be positive, got {self.focal}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @classmethod
    def for_frame(cls, focal: float, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the image center."""
        return cls(focal, (width - 1) / 2.0, (height - 1) / 2.0)

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.focal, 0.0, self.cx], [0.0, self.focal, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse(self) -> np.ndarray:
        f = self.focal
        return np.array(
            [[1.0 / f, 0.0, -self.cx / f], [0.0, 1.0 / f, -self.cy / f], [0.0, 0.0, 1.0]]
        )

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics for an image resized by *factor* (e.g. 0.5 per pyramid level)."""
        return CameraIntrinsics(self.focal * factor, self.cx * factor, self.cy * factor)


def _check_angle(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if abs(value) > MAX_ANGLE_RAD:
        raise ValueError(f"|{name}| = {abs(value):.4f} rad exceeds {MAX_ANGLE_RAD:.4f}")


@dataclass(frozen=True)
class Pose:
    """One camera pose as three rotation angles in radians."""

    theta_x: float = 0.0  # pitch
    theta_y: float = 0.0  # yaw
    theta_z: float = 0.0  # roll

    def __post_init__(self):
        _check_angle("theta_x", self.theta_x)
        _check_angle("theta_y", self.theta_y)
        _check_angle("theta_z", self.theta_z)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_x, self.theta_y, self.theta_z])


@dataclass(frozen=True)
class Pose6D:
    """Full 6-DoF pose: rotation angles plus translation and scene distance."""

    theta_x: float
    theta_y: float
    theta_z: float
    t_x: float
    t_y: float
    t_z: float
    d: float

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d > 0):
            raise ValueError(f"scene distance must be positive, got {self.d}")


def reduce_pose_6d(p6: Pose6D) -> Pose:
    """Fold small in-plane translations into equivalent rotations.

    Returns (theta_x + asin(t_y/d), theta_y + asin(-t_x/d), theta_z); the
    translation components are dropped.
    """
    if abs(p6.t_x / p6.d) > 1 or abs(p6.t_y / p6.d) > 1:
        raise ValueError("translation exceeds scene distance; |t/d| must be <= 1")
    return Pose(
        p6.theta_x + math.asin(p6.t_y / p6.d),
        p6.theta_y + math.asin(-p6.t_x / p6.d),
        p6.theta_z,
    )


def rotation_matrix(pose: Pose) -> np.ndarray:
    """Rotation matrix ``Rz(theta_z) @ Ry(theta_y) @ Rx(theta_x)``."""
    cx, sx = math.cos(pose.theta_x), math.sin(pose.theta_x)
    cy, sy = math.cos(pose.theta_y), math.sin(pose.theta_y)
    cz, sz = math.cos(pose.theta_z), math.sin(pose.theta_z)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
    return rz @ ry @ rx


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale a 3x3 homography so its bottom-right entry is 1."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {h.shape}")
    if abs(h[2, 2]) < _SINGULAR_EPS:
        raise SingularProjectionError("homography has (near-)zero bottom-right entry")
    return h / h[2, 2]


def homography_from_pose(pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Image-plane homography ``K R K^-1`` for a pure camera rotation."""
    h = intr.matrix() @ rotation_matrix(pose) @ intr.inverse()
    return normalize_homography(h)


def invert_homography(h: np.ndarray) -> np.ndarray:
    """Inverse homography, normalized."""
    h = np.asarray(h, dtype=np.float64)
    det = np.linalg.det(h)
    if abs(det) < _SINGULAR_EPS:
        raise SingularProjectionError("homography is singular")
    return normalize_homography(np.linalg.inv(h))


def apply_homography(h: np.ndarray, x, y):
    """Map points through a homography with homogeneous normalization.

    ``x`` and ``y`` may be scalars or arrays; returns ``(x', y')`` with the
    same shape.  Raises if the projective denominator vanishes anywhere.
    """
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    den = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if np.any(np.abs(den) < _SINGULAR_EPS):
        raise SingularProjectionError("projective denominator vanished")
    xp = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / den
    yp = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / den
    return xp, yp


def jacobian_det(h: np.ndarray, x, y):
    """Analytic determinant of the 2x2 Jacobian of the projective map.

    For ``(x', y') = H(x, y)`` with denominator ``d = h20 x + h21 y + h22``,
    the Jacobian determinant equals ``det(H) / d^3``.  Pure in-plane rolls
    give exactly 1 up to floating error.
    """
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    den = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if np.any(np.abs(den) < _SINGULAR_EPS):
        raise SingularProjectionError("projective denominator vanished")
    det = np.linalg.det(h)
    out = det / den**3
    return float(out) if out.ndim == 0 else out
