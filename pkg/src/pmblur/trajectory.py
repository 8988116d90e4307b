"""Camera pose sequences: synthesis, ordering, comparison, serialization.

A trajectory is an ordered sequence of T rotation poses (pitch, yaw, roll)
visited during the exposure.  The blur operator is invariant to the
temporal order (it is a time-average), so the comparison metric here is an
order-invariant Earth Mover's Distance, and a separate heuristic recovers
a plausible temporal ordering for video rendering.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from pmblur.geometry import (
    MAX_ANGLE_RAD,
    CameraIntrinsics,
    Pose,
    apply_homography,
    homography_from_pose,
)


@dataclass(frozen=True)
class Trajectory:
    """Ordered sequence of camera poses, stored as a (T, 3) angle array."""

    angles: np.ndarray  # radians, columns (theta_x, theta_y, theta_z)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.atleast_2d(np.asarray(self.angles, dtype=np.float64)))
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise ValueError(f"trajectory angles must be (T, 3) with T >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("trajectory contains non-finite angles")
        if np.abs(arr).max() > MAX_ANGLE_RAD:
            raise ValueError(f"trajectory angle exceeds {MAX_ANGLE_RAD:.4f} rad")
        object.__setattr__(self, "angles", arr)

    @property
    def T(self) -> int:
        return self.angles.shape[0]

    def pose(self, t: int) -> Pose:
        return Pose(*self.angles[t])

    def poses(self) -> list[Pose]:
        return [Pose(*row) for row in self.angles]

    @classmethod
    def zero(cls, timesteps: int) -> "Trajectory":
        return cls(np.zeros((timesteps, 3)))


@dataclass(frozen=True)
class PixelParam:
    """Pitch/yaw expressed as pixel displacements, plus roll in radians."""

    p: float  # pitch displacement, pixels
    y: float  # yaw displacement, pixels
    r: float  # roll, radians
    focal: float  # pixels

    def __post_init__(self):
        if not (math.isfinite(self.focal) and self.focal > 0):
            raise ValueError(f"focal must be positive, got {self.focal}")


def from_pixel_params(params: list[PixelParam]) -> Trajectory:
    """Convert per-timestep pixel displacements to rotation angles.

    pitch = arctan(p/f), yaw = arctan(y/f); roll passes through unchanged.
    All entries must share the same focal length.
    """
    if not params:
        raise ValueError("empty parameter list")
    focal = params[0].focal
    if any(q.focal != focal for q in params):
        raise ValueError("focal length must be uniform across the list")
    angles = np.array(
        [[math.atan(q.p / focal), math.atan(q.y / focal), q.r] for q in params]
    )
    return Trajectory(angles)


@dataclass(frozen=True)
class TremorConfig:
    """Seeded physiological-tremor trajectory generator settings.

    Per axis the signal is a slow random drift (cubic through 4 seeded
    control points) plus three band-limited sinusoids, rescaled so the peak
    rotation equals ``amplitude_deg``.
    """

    timesteps: int = 25
    amplitude_deg: float = 0.5
    band: tuple[float, float] = (6.0, 12.0)  # Hz
    exposure: float = 0.5  # seconds
    seed: int = 0
    centered: bool = True

    def __post_init__(self):
        if self.timesteps < 2:
            raise ValueError("timesteps must be >= 2")
        if not self.amplitude_deg > 0:
            raise ValueError("amplitude_deg must be positive")
        f_lo, f_hi = self.band
        if not (0 < f_lo < f_hi):
            raise ValueError(f"invalid frequency band {self.band}")
        if not self.exposure > 0:
            raise ValueError("exposure must be positive")


def generate_tremor(cfg: TremorConfig) -> Trajectory:
    """Generate a band-limited hand-tremor trajectory, deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    t = np.linspace(0.0, cfg.exposure, cfg.timesteps)
    amp_rad = math.radians(cfg.amplitude_deg)
    f_lo, f_hi = cfg.band

    angles = np.empty((cfg.timesteps, 3))
    for axis in range(3):
        # slow drift: exact cubic through 4 random control points
        ctrl_t = np.linspace(0.0, cfg.exposure, 4)
        ctrl_v = rng.standard_normal(4)
        drift = np.polyval(np.polyfit(ctrl_t, ctrl_v, 3), t)

        signal = drift
        for _ in range(3):
            freq = rng.uniform(f_lo, f_hi)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            rel_amp = rng.uniform(0.3, 1.0)
            signal = signal + rel_amp * np.sin(2.0 * math.pi * freq * t + phase)

        if cfg.centered:
            signal = signal - signal.mean()
        peak = np.abs(signal).max()
        if peak == 0.0:
            signal = np.zeros_like(signal)
        else:
            signal = signal * (amp_rad / peak)
        angles[:, axis] = signal

    return Trajectory(angles)


def order_heuristic(traj: Trajectory) -> Trajectory:
    """Recover a plausible temporal order for an unordered pose set.

    Picks the extreme pose (maximizing summed Euclidean distance in angle
    space to all others), then sorts poses by ascending distance to it.
    Ties break by original index; the output is a permutation of the input.
    """
    a = traj.angles
    diffs = np.linalg.norm(a[:, None, :] - a[None, :, :], axis=2)
    extreme = int(np.argmax(diffs.sum(axis=1)))
    order = np.argsort(diffs[extreme], kind="stable")
    return Trajectory(a[order])


def make_grid(width: int, height: int, n: int = 5) -> np.ndarray:
    """``n x n`` lattice of points spanning a WxH frame with half-cell margin.

    Returns an (n*n, 2) array of (x, y) pixel coordinates.
    """
    xs = (np.arange(n) + 0.5) * width / n
    ys = (np.arange(n) + 0.5) * height / n
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def emd_distance(
    a: Trajectory,
    b: Trajectory,
    intr: CameraIntrinsics,
    grid: np.ndarray,
) -> float:
    """Order-invariant distance between two equal-length pose sequences.

    Each pose maps *grid* through its homography; the cost between poses is
    the mean squared displacement of the projected grid.  With uniform unit
    masses the optimal transport plan is a permutation, so the exact optimum
    is the minimum-cost assignment (Hungarian, O(T^3)).
    """
    if a.T != b.T:
        raise ValueError(f"trajectory lengths differ: {a.T} vs {b.T}")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] != 2 or grid.shape[0] < 1:
        raise ValueError("grid must be an (N_g, 2) array of points")

    def projected(traj: Trajectory) -> np.ndarray:
        pts = np.empty((traj.T, grid.shape[0], 2))
        for t, pose in enumerate(traj.poses()):
            h = homography_from_pose(pose, intr)
            pts[t, :, 0], pts[t, :, 1] = apply_homography(h, grid[:, 0], grid[:, 1])
        return pts

    ga = projected(a)
    gb = projected(b)
    # cost[i, j] = mean squared displacement between pose i of a and pose j of b
    diff = ga[:, None, :, :] - gb[None, :, :, :]
    cost = np.einsum("ijkl,ijkl->ij", diff, diff) / grid.shape[0]
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def save_trajectory(traj: Trajectory, focal: float, path: str | os.PathLike) -> None:
    """Write a trajectory plus its focal length as JSON."""
    payload = {
        "T": traj.T,
        "focal_px": float(focal),
        "angles_rad": traj.angles.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_trajectory(path: str | os.PathLike) -> tuple[Trajectory, float]:
    """Read a trajectory JSON file; returns (trajectory, focal_px)."""
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("T", "focal_px", "angles_rad"):
        if key not in payload:
            raise ValueError(f"trajectory file missing key {key!r}: {path}")
    angles = np.asarray(payload["angles_rad"], dtype=np.float64)
    if angles.size == 0:
        raise ValueError(f"trajectory file has empty pose list: {path}")
    traj = Trajectory(angles)
    if traj.T != int(payload["T"]):
        raise ValueError(f"trajectory length {traj.T} does not match declared T={payload['T']}")
    return traj, float(payload["focal_px"])
