"""Metrics, synthetic pair generation, and video-frame reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from pmblur.blur import BlurOperator, blur_efficient, blur_naive, saturate
from pmblur.geometry import CameraIntrinsics
from pmblur.image import Boundary, sample_bilinear, validate_image
from pmblur.trajectory import Trajectory, order_heuristic


@dataclass(frozen=True)
class PairSample:
    """A sharp/blurry pair with the trajectory that links them."""

    sharp: np.ndarray
    blurry: np.ndarray
    trajectory: Trajectory
    focal: float
    seed: int


def synth_pair(
    u: np.ndarray,
    traj: Trajectory,
    intr: CameraIntrinsics,
    a_sat: float = 50.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> PairSample:
    """Synthesize ``blurry = R(B u)`` plus optional seeded Gaussian noise."""
    u = validate_image(u)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    op = BlurOperator.from_trajectory(traj, intr, u.shape[1], u.shape[0])
    blurry = saturate(blur_efficient(u, op), a_sat)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        blurry = np.clip(blurry + noise_sigma * rng.standard_normal(blurry.shape), 0.0, 1.0)
    return PairSample(u, blurry, traj, intr.focal, seed)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images; inf if identical."""
    a = validate_image(a)
    b = validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    win = _gaussian_window()
    c1 = 0.01**2
    c2 = 0.03**2
    mu_a = correlate(a, win, mode="reflect")
    mu_b = correlate(b, win, mode="reflect")
    var_a = correlate(a * a, win, mode="reflect") - mu_a**2
    var_b = correlate(b * b, win, mode="reflect") - mu_b**2
    cov = correlate(a * b, win, mode="reflect") - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window."""
    a = validate_image(a)
    b = validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return _ssim_channel(a, b)
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]))


def render_video(
    u_hat: np.ndarray,
    traj: Trajectory,
    intr: CameraIntrinsics,
    ordered: bool = False,
) -> list[np.ndarray]:
    """Warp the sharp estimate by each pose's homography, one frame per pose.

    With ``ordered=False`` the frame average equals ``blur_naive`` output
    exactly (same samples); ``ordered=True`` permutes the frames into the
    heuristic temporal order first.
    """
    u_hat = validate_image(u_hat)
    if ordered:
        traj = order_heuristic(traj)
    h, w = u_hat.shape[:2]
    op = BlurOperator.from_trajectory(traj, intr, w, h)
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    return [
        sample_bilinear(u_hat, gx + op.forward.dx[t], gy + op.forward.dy[t], Boundary.CLAMP)
        for t in range(traj.T)
    ]
