"""Floating-point image buffers, bilinear sampling, and PNG I/O.

Images are plain numpy arrays: ``(H, W)`` grayscale or ``(H, W, 3)`` RGB,
float64, values nominally in [0, 1], row-major.  Pixel (x, y) refers to
column x, row y; continuous coordinates place sample points at integer
pixel centers.
"""

from __future__ import annotations

import enum
import os

import cv2
import numpy as np


class Boundary(enum.Enum):
    """How out-of-range bilinear taps are resolved."""

    CLAMP = "clamp"  # read the nearest border pixel
    ZERO = "zero"  # out-of-range taps contribute nothing


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check shape/finiteness and return a float64 view of *img*."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty image")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite samples")
    return arr


def sample_bilinear(
    img: np.ndarray,
    x: np.ndarray | float,
    y: np.ndarray | float,
    boundary: Boundary = Boundary.CLAMP,
) -> np.ndarray:
    """Sample *img* at continuous coordinates with bilinear interpolation.

    ``x`` and ``y`` may be scalars or arrays of any common shape; the result
    has that shape, with a trailing channel axis for color images.  Under
    ``Boundary.CLAMP`` out-of-range taps read the nearest border pixel;
    under ``Boundary.ZERO`` they contribute 0.
    """
    img = np.asarray(img, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite sample coordinates")

    h, w = img.shape[:2]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x1 = x0 + 1
    y1 = y0 + 1

    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy

    if boundary is Boundary.ZERO:
        # fold validity into the weights before clipping indices
        vx0 = (x0 >= 0) & (x0 < w)
        vx1 = (x1 >= 0) & (x1 < w)
        vy0 = (y0 >= 0) & (y0 < h)
        vy1 = (y1 >= 0) & (y1 < h)
        w00 = w00 * (vx0 & vy0)
        w10 = w10 * (vx1 & vy0)
        w01 = w01 * (vx0 & vy1)
        w11 = w11 * (vx1 & vy1)

    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y1, 0, h - 1)

    if img.ndim == 3:
        w00 = w00[..., None]
        w10 = w10[..., None]
        w01 = w01[..., None]
        w11 = w11[..., None]

    return (
        w00 * img[y0c, x0c]
        + w10 * img[y0c, x1c]
        + w01 * img[y1c, x0c]
        + w11 * img[y1c, x1c]
    )


def load_png(path: str | os.PathLike) -> np.ndarray:
    """Decode an 8- or 16-bit PNG to a float64 image in [0, 1]."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"could not decode PNG: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise IOError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]  # drop alpha
        if raw.shape[2] != 3:
            raise IOError(f"unsupported channel count {raw.shape[2]} in {path}")
        raw = raw[:, :, ::-1]  # BGR -> RGB
    return raw.astype(np.float64) / scale


def save_png(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write *img* as an 8-bit PNG, clamping to [0, 1] and rounding."""
    arr = validate_image(img)
    path = os.fspath(path)
    quant = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if quant.ndim == 3:
        quant = quant[:, :, ::-1]  # RGB -> BGR
    if not cv2.imwrite(path, quant):
        raise IOError(f"could not write PNG: {path}")
