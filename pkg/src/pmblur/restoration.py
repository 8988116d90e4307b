"""Non-blind restoration: linearized ADMM with a TV prior, plus Richardson-Lucy.

Each ADMM iteration alternates three steps:

- prior:  ``u <- D_b(u - c * B^T (B u - z + beta))`` with D_b a TV denoiser,
- data:   ``z <- (v + a (B u + beta)) / (a + 1)`` (closed form),
- update: ``beta <- beta + B u - z``.

The coefficient schedules (a_k, b_k, c_k) are plain configuration; the
defaults keep the identity-operator case essentially lossless while still
regularizing blurred inputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from pmblur.blur import BlurOperator, adjoint, blur_efficient
from pmblur.image import validate_image


class DivergenceError(RuntimeError):
    """An iterate became non-finite; carries the iteration index."""

    def __init__(self, iteration: int, what: str):
        super().__init__(f"restoration diverged at iteration {iteration}: {what}")
        self.iteration = iteration


def _default_b_schedule(k: int) -> list[float]:
    # geometric decay 0.05 -> 0.005 across the schedule
    if k == 1:
        return [0.05]
    ratio = (0.005 / 0.05) ** (1.0 / (k - 1))
    return [0.05 * ratio**i for i in range(k)]


@dataclass
class AdmmConfig:
    """Iteration count and per-iteration coefficient schedules."""

    iterations: int = 8
    a: list[float] = field(default_factory=lambda: [0.5] * 8)
    b: list[float] = field(default_factory=lambda: _default_b_schedule(8))
    c: list[float] = field(default_factory=lambda: [1.0] * 8)
    tv_iters: int = 20
    clip_output: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        for name, sched in (("a", self.a), ("b", self.b), ("c", self.c)):
            if len(sched) != self.iterations:
                raise ValueError(
                    f"schedule {name!r} has length {len(sched)}, expected {self.iterations}"
                )
            if any(not v > 0 for v in sched):
                raise ValueError(f"schedule {name!r} entries must be positive")
        if self.tv_iters < 1:
            raise ValueError("tv_iters must be >= 1")

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "AdmmConfig":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            iterations=payload["iters"],
            a=list(payload["a"]),
            b=list(payload["b"]),
            c=list(payload["c"]),
            tv_iters=payload.get("tv_iters", 20),
            clip_output=payload.get("clip", True),
        )

    def to_json(self, path: str | os.PathLike) -> None:
        payload = {
            "iters": self.iterations,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "tv_iters": self.tv_iters,
            "clip": self.clip_output,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _tv_denoise_channel(x: np.ndarray, strength: float, iters: int) -> np.ndarray:
    """Chambolle dual-projection solver for the ROF problem."""
    px = np.zeros_like(x)
    py = np.zeros_like(x)
    tau = 0.25
    for _ in range(iters):
        div = np.zeros_like(x)
        div[:, :-1] -= px[:, :-1]
        div[:, 1:] += px[:, :-1]
        div[:-1, :] -= py[:-1, :]
        div[1:, :] += py[:-1, :]
        u = x - strength * div
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        gx[:, :-1] = u[:, 1:] - u[:, :-1]
        gy[:-1, :] = u[1:, :] - u[:-1, :]
        px_new = px + (tau / strength) * gx
        py_new = py + (tau / strength) * gy
        norm = np.maximum(1.0, np.sqrt(px_new**2 + py_new**2))
        px = px_new / norm
        py = py_new / norm
    div = np.zeros_like(x)
    div[:, :-1] -= px[:, :-1]
    div[:, 1:] += px[:, :-1]
    div[:-1, :] -= py[:-1, :]
    div[1:, :] += py[:-1, :]
    return x - strength * div


def tv_denoise(x: np.ndarray, strength: float, inner_iters: int = 20) -> np.ndarray:
    """Approximate total-variation (ROF) denoising; strength 0 is identity."""
    if strength < 0:
        raise ValueError("strength must be >= 0")
    x = validate_image(x)
    if strength == 0:
        return x.copy()
    if x.ndim == 2:
        return _tv_denoise_channel(x, strength, inner_iters)
    return np.stack(
        [_tv_denoise_channel(x[:, :, c], strength, inner_iters) for c in range(x.shape[2])],
        axis=-1,
    )


def admm_deblur(v: np.ndarray, op: BlurOperator, cfg: AdmmConfig | None = None) -> np.ndarray:
    """Restore a blurry image given its blur operator.

    Initializes u = z = v, beta = 0 and runs the configured number of
    prior / data / update iterations.  Raises :class:`DivergenceError` on
    any non-finite iterate.
    """
    if cfg is None:
        cfg = AdmmConfig()
    v = op._check_shape(v)

    u = v.copy()
    z = v.copy()
    beta = np.zeros_like(v)
    for k in range(cfg.iterations):
        a_k, b_k, c_k = cfg.a[k], cfg.b[k], cfg.c[k]
        grad = adjoint(blur_efficient(u, op) - z + beta, op)
        step = u - c_k * grad
        if not np.isfinite(step).all():
            raise DivergenceError(k, "non-finite values in u")
        u = tv_denoise(step, b_k, cfg.tv_iters)
        bu = blur_efficient(u, op)
        z = (v + a_k * (bu + beta)) / (a_k + 1.0)
        beta = beta + bu - z
        for name, arr in (("u", u), ("z", z), ("beta", beta)):
            if not np.isfinite(arr).all():
                raise DivergenceError(k, f"non-finite values in {name}")
    if cfg.clip_output:
        u = np.clip(u, 0.0, 1.0)
    return u


def richardson_lucy(
    v: np.ndarray, op: BlurOperator, iters: int = 30, eps: float = 1e-8
) -> np.ndarray:
    """Multiplicative Richardson-Lucy updates using the blur/adjoint pair.

    ``u <- u * B^T(v / (B u + eps))``; nonnegativity is preserved by
    construction.
    """
    v = op._check_shape(v)
    if (v < 0).any():
        raise ValueError("Richardson-Lucy requires a nonnegative input")
    u = v.copy()
    for _ in range(iters):
        ratio = v / (blur_efficient(u, op) + eps)
        u = u * adjoint(ratio, op)
    return u
