"""Blind trajectory estimation by reblur-loss descent.

Given only the blurry image, we search for the rotation trajectory whose
induced blur, applied to the current restoration, best reproduces the
observation (after the sensor saturation response).  The scheme is
block-coordinate: restore with the current trajectory, descend on the 3T
angles by finite-difference gradient with backtracking line search, then
re-restore.  Multi-start initialization (zero trajectory plus small seeded
tremors) and a coarse-to-fine image pyramid stand in for a learned
trajectory prior.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from pmblur.blur import AdjointMode, BlurOperator, blur_efficient, saturate
from pmblur.geometry import CameraIntrinsics
from pmblur.image import Boundary, validate_image
from pmblur.restoration import AdmmConfig, admm_deblur
from pmblur.trajectory import Trajectory, TremorConfig, generate_tremor


@dataclass
class RefineConfig:
    """Settings for trajectory refinement and blind estimation."""

    max_iters: int = 20
    step: float = 2e-3  # largest per-axis angle change per accepted step, radians
    fd_step: float = 1e-4  # finite-difference step, radians
    restarts: int = 2  # seeded tremor initializations (plus the zero trajectory)
    pyramid_levels: int = 2
    tol: float = 1e-4  # relative loss-decrease stopping threshold
    seed: int = 0
    timesteps: int = 9  # trajectory length for blind initialization
    init_amplitude_deg: float = 0.3
    a_sat: float = 50.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.timesteps < 1:
            raise ValueError("timesteps must be >= 1")


@dataclass
class RefineReport:
    """Outcome of one refinement (or the winning blind restart)."""

    trajectory: Trajectory
    restored: np.ndarray
    loss_trace: list[float]
    restart_losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]

    def to_json(self, path: str | os.PathLike, focal: float) -> None:
        payload = {
            "loss_trace": self.loss_trace,
            "restart_losses": self.restart_losses,
            "trajectory": {
                "T": self.trajectory.T,
                "focal_px": float(focal),
                "angles_rad": self.trajectory.angles.tolist(),
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def reblur_loss(
    v: np.ndarray,
    traj: Trajectory,
    intr: CameraIntrinsics,
    u_hat: np.ndarray,
    a_sat: float = 50.0,
) -> float:
    """Sum of squared differences between ``R(B u_hat)`` and ``v``."""
    v = validate_image(v)
    u_hat = validate_image(u_hat)
    if v.shape != u_hat.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {u_hat.shape}")
    op = BlurOperator.from_trajectory(traj, intr, v.shape[1], v.shape[0])
    reblurred = saturate(blur_efficient(u_hat, op), a_sat)
    return float(np.sum((reblurred - v) ** 2))


def _loss_given_restoration(v, angles, intr, u_hat, a_sat):
    return reblur_loss(v, Trajectory(angles), intr, u_hat, a_sat)


def _fd_gradient(v, angles, intr, u_hat, a_sat, fd_step):
    """Central finite-difference gradient of the reblur loss over all angles."""
    grad = np.zeros_like(angles)
    for idx in np.ndindex(angles.shape):
        plus = angles.copy()
        plus[idx] += fd_step
        minus = angles.copy()
        minus[idx] -= fd_step
        grad[idx] = (
            _loss_given_restoration(v, plus, intr, u_hat, a_sat)
            - _loss_given_restoration(v, minus, intr, u_hat, a_sat)
        ) / (2.0 * fd_step)
    return grad


def refine_trajectory(
    v: np.ndarray,
    init: Trajectory,
    intr: CameraIntrinsics,
    cfg: RefineConfig | None = None,
    admm: AdmmConfig | None = None,
) -> RefineReport:
    """Descend the reblur loss over the trajectory angles.

    ``max_iters`` counts outer iterations including the initial evaluation,
    so at most ``max_iters - 1`` gradient steps are taken.  Within each step
    the restoration is held fixed; after an accepted step the image is
    re-restored, and the new restoration is kept only if it does not
    increase the loss, so the accepted-loss trace is non-increasing.
    """
    if cfg is None:
        cfg = RefineConfig()
    if admm is None:
        admm = AdmmConfig()
    v = validate_image(v)
    h, w = v.shape[:2]

    angles = init.angles.copy()
    u_hat = admm_deblur(v, BlurOperator.from_trajectory(Trajectory(angles), intr, w, h), admm)
    loss = _loss_given_restoration(v, angles, intr, u_hat, cfg.a_sat)
    trace = [loss]

    for _ in range(cfg.max_iters - 1):
        grad = _fd_gradient(v, angles, intr, u_hat, cfg.a_sat, cfg.fd_step)
        gmax = np.abs(grad).max()
        if gmax == 0.0:
            break
        direction = -grad / gmax  # unit infinity-norm: step bounds per-axis change

        step = cfg.step
        accepted = None
        for _ in range(9):  # initial step plus up to 8 halvings
            candidate = angles + step * direction
            cand_loss = _loss_given_restoration(v, candidate, intr, u_hat, cfg.a_sat)
            if cand_loss < loss:
                accepted = (candidate, cand_loss)
                break
            step *= 0.5
        if accepted is None:
            # stalled under the current restoration; a fresh restore can
            # reshape the landscape, so retry once if it does not raise the loss
            u_new = admm_deblur(
                v, BlurOperator.from_trajectory(Trajectory(angles), intr, w, h), admm
            )
            loss_new = _loss_given_restoration(v, angles, intr, u_new, cfg.a_sat)
            if loss_new <= loss and not np.array_equal(u_new, u_hat):
                u_hat = u_new
                loss = loss_new
                trace.append(loss)
                continue
            break

        angles, loss = accepted
        u_new = admm_deblur(
            v, BlurOperator.from_trajectory(Trajectory(angles), intr, w, h), admm
        )
        loss_new = _loss_given_restoration(v, angles, intr, u_new, cfg.a_sat)
        if loss_new <= loss:
            u_hat = u_new
            loss = loss_new
        trace.append(loss)
        if trace[-2] > 0 and (trace[-2] - trace[-1]) / trace[-2] < cfg.tol:
            break

    return RefineReport(Trajectory(angles), u_hat, trace)


def _downsample2(img: np.ndarray) -> np.ndarray:
    """2x box-filter downsampling (truncating odd edges)."""
    h, w = img.shape[:2]
    h2, w2 = h // 2, w // 2
    crop = img[: 2 * h2, : 2 * w2]
    if img.ndim == 2:
        return 0.25 * (crop[0::2, 0::2] + crop[1::2, 0::2] + crop[0::2, 1::2] + crop[1::2, 1::2])
    return 0.25 * (crop[0::2, 0::2] + crop[1::2, 0::2] + crop[0::2, 1::2] + crop[1::2, 1::2])


def search_admm_config(iterations: int = 20) -> AdmmConfig:
    """ADMM schedule for trajectory search rather than final restoration.

    The step size c = 1.5 is deliberately past the stable range for operators
    with unit spectral radius, so the zero-trajectory (identity) explanation
    of a blurry image keeps a large persistent residual instead of trivially
    reproducing it; genuinely blurred operators damp the oscillation and can
    still reach a low reblur loss.  Use the default :class:`AdmmConfig` for
    the image actually returned to the caller.
    """
    if iterations < 2:
        raise ValueError("iterations must be >= 2")
    ratio = (0.001 / 0.05) ** (1.0 / (iterations - 1))
    return AdmmConfig(
        iterations=iterations,
        a=[0.2] * iterations,
        b=[0.05 * ratio**i for i in range(iterations)],
        c=[1.5] * iterations,
    )


def blind_deblur(
    v: np.ndarray,
    intr: CameraIntrinsics,
    cfg: RefineConfig | None = None,
    admm: AdmmConfig | None = None,
    final_admm: AdmmConfig | None = None,
) -> RefineReport:
    """Estimate the trajectory and restoration from the blurry image alone.

    Runs coarse-to-fine refinement from the zero trajectory and from
    ``cfg.restarts`` seeded small-amplitude tremor trajectories; the restart
    with the lowest final full-resolution reblur loss wins.  When
    ``final_admm`` is given the winner's image is re-restored with it, which
    matters when the search uses :func:`search_admm_config` (tuned to rank
    trajectories, not to produce the best-looking image).
    """
    if cfg is None:
        cfg = RefineConfig()
    if admm is None:
        admm = AdmmConfig()
    v = validate_image(v)

    pyramid = [v]
    intrs = [intr]
    for _ in range(cfg.pyramid_levels - 1):
        pyramid.append(_downsample2(pyramid[-1]))
        intrs.append(intrs[-1].scaled(0.5))

    inits = [Trajectory.zero(cfg.timesteps)]
    for r in range(cfg.restarts):
        inits.append(
            generate_tremor(
                TremorConfig(
                    timesteps=cfg.timesteps,
                    amplitude_deg=cfg.init_amplitude_deg,
                    seed=cfg.seed + r,
                )
            )
        )

    best: RefineReport | None = None
    restart_losses: list[float] = []
    failures: list[Exception] = []
    for init in inits:
        traj = init
        report = None
        try:
            # coarse to fine; angles carry across levels unchanged
            for level in range(cfg.pyramid_levels - 1, -1, -1):
                report = refine_trajectory(pyramid[level], traj, intrs[level], cfg, admm)
                traj = report.trajectory
        except Exception as exc:  # keep other restarts alive
            failures.append(exc)
            continue
        assert report is not None
        restart_losses.append(report.final_loss)
        if best is None or report.final_loss < best.final_loss:
            best = report

    if best is None:
        raise RuntimeError(f"all blind-deblur restarts failed: {failures}")
    best.restart_losses = restart_losses
    if final_admm is not None:
        h, w = v.shape[:2]
        op = BlurOperator.from_trajectory(best.trajectory, intr, w, h)
        best.restored = admm_deblur(v, op, final_admm)
    return best
