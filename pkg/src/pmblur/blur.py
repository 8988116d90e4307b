"""The rotational blur operator, its adjoint, and a sparse-matrix oracle.

A trajectory of T camera rotations induces T homographies; the blurry image
is the average of the latent image warped by each of them.  The operator is
realized as a per-pixel, per-timestep offset field: for output pixel i at
timestep t the sample location is ``i + delta_t(i)`` with
``delta_t(i) = H_t^-1(i) - i``.

Three evaluation paths are provided:

- ``blur_naive``: one bilinear warp per timestep, averaged.
- ``blur_efficient``: all timesteps fused into a single gather over a
  sqrt(T) x sqrt(T) tap lattice with compensated offsets; numerically
  identical to the naive path.
- ``build_sparse_oracle``: an explicit sparse matrix for small frames,
  used to cross-check both paths and the adjoint.

The adjoint is the same averaging structure with offsets from the forward
homographies; ``AdjointMode.NEGATED_FORWARD`` approximates those offsets by
negating the stored forward field, halving offset storage.  The first-order
error of that approximation is ``(dH^-1/dj - Id) * delta``, second order in
the rotation angles.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from pmblur.geometry import (
    CameraIntrinsics,
    apply_homography,
    homography_from_pose,
    invert_homography,
)
from pmblur.image import Boundary, sample_bilinear, validate_image
from pmblur.trajectory import Trajectory

_ORACLE_MAX_PIXELS = 4096  # sparse oracle is a test-scale tool

_MAGIC = b"PMBM"


class AdjointMode(enum.Enum):
    EXACT_INVERSE = "exact-inverse"  # offsets recomputed from forward homographies
    NEGATED_FORWARD = "negated-forward"  # reuse the stored field with delta -> -delta


@dataclass(frozen=True)
class OffsetField:
    """Per-pixel, per-timestep displacements, t-major ``(T, H, W)`` arrays."""

    width: int
    height: int
    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.float64)
        dy = np.asarray(self.dy, dtype=np.float64)
        if dx.shape != dy.shape or dx.ndim != 3:
            raise ValueError("offset arrays must share a (T, H, W) shape")
        if dx.shape[1:] != (self.height, self.width):
            raise ValueError(
                f"offset shape {dx.shape[1:]} does not match {self.height}x{self.width}"
            )
        if not (np.isfinite(dx).all() and np.isfinite(dy).all()):
            raise ValueError("offset field contains non-finite entries")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @property
    def T(self) -> int:
        return self.dx.shape[0]


def _pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))


def offsets_from_trajectory(
    traj: Trajectory, intr: CameraIntrinsics, width: int, height: int
) -> OffsetField:
    """Forward offsets ``H_t^-1(i) - i`` for every pixel and timestep."""
    gx, gy = _pixel_grid(width, height)
    dx = np.empty((traj.T, height, width))
    dy = np.empty_like(dx)
    for t, pose in enumerate(traj.poses()):
        hinv = invert_homography(homography_from_pose(pose, intr))
        xs, ys = apply_homography(hinv, gx, gy)
        dx[t] = xs - gx
        dy[t] = ys - gy
    return OffsetField(width, height, dx, dy)


def _adjoint_offsets(
    traj: Trajectory, intr: CameraIntrinsics, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint offsets ``H_t(j) - j``, computed on the fly (not stored)."""
    gx, gy = _pixel_grid(width, height)
    dx = np.empty((traj.T, height, width))
    dy = np.empty_like(dx)
    for t, pose in enumerate(traj.poses()):
        h = homography_from_pose(pose, intr)
        xs, ys = apply_homography(h, gx, gy)
        dx[t] = xs - gx
        dy[t] = ys - gy
    return dx, dy


def _tap_lattice(n_padded: int) -> np.ndarray:
    """Integer tap positions for a sqrt(T) x sqrt(T) filter, center-heavy.

    For T=25 this is exactly {-2..2}^2, row-major.
    """
    side = math.isqrt(n_padded)
    assert side * side == n_padded
    coords = np.arange(side) - (side - 1) // 2
    px, py = np.meshgrid(coords, coords)
    return np.stack([px.ravel(), py.ravel()], axis=1).astype(np.float64)


@dataclass
class BlurOperator:
    """Immutable blur operator bound to one trajectory and frame geometry."""

    trajectory: Trajectory
    intrinsics: CameraIntrinsics
    width: int
    height: int
    forward: OffsetField
    adjoint_mode: AdjointMode = AdjointMode.EXACT_INVERSE
    boundary: Boundary = Boundary.CLAMP
    _taps: tuple | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_trajectory(
        cls,
        traj: Trajectory,
        intr: CameraIntrinsics,
        width: int,
        height: int,
        adjoint_mode: AdjointMode = AdjointMode.EXACT_INVERSE,
        boundary: Boundary = Boundary.CLAMP,
    ) -> "BlurOperator":
        forward = offsets_from_trajectory(traj, intr, width, height)
        return cls(traj, intr, width, height, forward, adjoint_mode, boundary)

    @property
    def T(self) -> int:
        return self.trajectory.T

    def _check_shape(self, img: np.ndarray) -> np.ndarray:
        img = validate_image(img)
        if img.shape[:2] != (self.height, self.width):
            raise ValueError(
                f"image shape {img.shape[:2]} does not match operator "
                f"{self.height}x{self.width}"
            )
        return img


def _average_offset_samples(
    img: np.ndarray,
    dx: np.ndarray,
    dy: np.ndarray,
    boundary: Boundary,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted average of bilinear samples at ``i + delta_t(i)``, t = 0..T-1."""
    t_steps = dx.shape[0]
    gx, gy = _pixel_grid(dx.shape[2], dx.shape[1])
    if weights is None:
        weights = np.full(t_steps, 1.0 / t_steps)
    acc = np.zeros(img.shape, dtype=np.float64)
    for t in range(t_steps):
        acc += weights[t] * sample_bilinear(img, gx + dx[t], gy + dy[t], boundary)
    return acc


def blur_naive(u: np.ndarray, op: BlurOperator) -> np.ndarray:
    """Blur as T sequential bilinear warps averaged with weight 1/T."""
    u = op._check_shape(u)
    return _average_offset_samples(u, op.forward.dx, op.forward.dy, op.boundary)


def _padded_offsets(op: BlurOperator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offsets and weights padded to a perfect-square timestep count.

    The final pose is repeated; its duplicates split that pose's original
    1/T weight, so the padded sum is numerically the unpadded average.
    """
    t = op.T
    side = math.ceil(math.sqrt(t))
    t_pad = side * side
    dx, dy = op.forward.dx, op.forward.dy
    weights = np.full(t, 1.0 / t)
    if t_pad != t:
        n_dup = t_pad - t + 1
        dx = np.concatenate([dx, np.repeat(dx[-1:], t_pad - t, axis=0)], axis=0)
        dy = np.concatenate([dy, np.repeat(dy[-1:], t_pad - t, axis=0)], axis=0)
        weights = np.concatenate([weights[:-1], np.full(n_dup, 1.0 / (t * n_dup))])
    return dx, dy, weights


def _build_taps(op: BlurOperator) -> tuple:
    """Precompute fused gather indices and weights for the efficient path."""
    dx, dy, wts = _padded_offsets(op)
    lattice = _tap_lattice(dx.shape[0])
    gx, gy = _pixel_grid(op.width, op.height)

    # absolute sample coordinates via tap position + compensated offset
    px = lattice[:, 0][:, None, None]
    py = lattice[:, 1][:, None, None]
    xs = (gx[None] + px) + (dx - px)
    ys = (gy[None] + py) + (dy - py)

    h, w = op.height, op.width
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x1 = x0 + 1
    y1 = y0 + 1

    wt = wts[:, None, None]
    w00 = wt * (1.0 - fx) * (1.0 - fy)
    w10 = wt * fx * (1.0 - fy)
    w01 = wt * (1.0 - fx) * fy
    w11 = wt * fx * fy
    if op.boundary is Boundary.ZERO:
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
    idx = (
        (y0c * w + x0c).astype(np.int32),
        (y0c * w + x1c).astype(np.int32),
        (y1c * w + x0c).astype(np.int32),
        (y1c * w + x1c).astype(np.int32),
    )
    return idx, (w00, w10, w01, w11)


def blur_efficient(u: np.ndarray, op: BlurOperator) -> np.ndarray:
    """Blur as one fused gather over the tap lattice; matches ``blur_naive``.

    Tap indices and bilinear weights are cached on the operator, so repeat
    applications (solver inner loops) pay only the weighted gather.
    """
    u = op._check_shape(u)
    if op._taps is None:
        op._taps = _build_taps(op)
    idx, wts = op._taps

    def _one(channel: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(channel).ravel()
        acc = (
            wts[0] * flat[idx[0]]
            + wts[1] * flat[idx[1]]
            + wts[2] * flat[idx[2]]
            + wts[3] * flat[idx[3]]
        )
        return acc.sum(axis=0)

    if u.ndim == 2:
        return _one(u)
    return np.stack([_one(u[:, :, c]) for c in range(u.shape[2])], axis=-1)


def adjoint(w_img: np.ndarray, op: BlurOperator) -> np.ndarray:
    """Apply the adjoint operator under the unit-Jacobian assumption.

    ``EXACT_INVERSE`` recomputes offsets from the forward homographies;
    ``NEGATED_FORWARD`` negates the stored forward field instead.
    """
    w_img = op._check_shape(w_img)
    if op.adjoint_mode is AdjointMode.EXACT_INVERSE:
        dx, dy = _adjoint_offsets(op.trajectory, op.intrinsics, op.width, op.height)
    else:
        dx, dy = -op.forward.dx, -op.forward.dy
    return _average_offset_samples(w_img, dx, dy, op.boundary)


def saturate(x: np.ndarray, a: float = 50.0) -> np.ndarray:
    """Smooth sensor saturation ``R(x) = x - log(1 + exp(a (x - 1))) / a``.

    Evaluated in a form that stays finite for large ``a (x - 1)``.
    """
    if not a > 0:
        raise ValueError(f"saturation sharpness must be positive, got {a}")
    x = np.asarray(x, dtype=np.float64)
    z = a * (x - 1.0)
    # log(1 + e^z) = max(z, 0) + log1p(e^-|z|)
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return x - softplus / a


class SparseBlurMatrix:
    """Explicit N x N blur matrix for small frames (test oracle)."""

    def __init__(self, matrix: sp.csr_matrix, width: int, height: int):
        self.matrix = matrix
        self.width = width
        self.height = height

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = validate_image(u)
        if u.ndim != 2:
            raise ValueError("sparse oracle operates on single-channel images")
        return (self.matrix @ u.ravel()).reshape(self.height, self.width)

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        v = validate_image(v)
        if v.ndim != 2:
            raise ValueError("sparse oracle operates on single-channel images")
        return (self.matrix.T @ v.ravel()).reshape(self.height, self.width)


def build_sparse_oracle(
    traj: Trajectory,
    intr: CameraIntrinsics,
    width: int,
    height: int,
    boundary: Boundary = Boundary.ZERO,
) -> SparseBlurMatrix:
    """Assemble the blur matrix row by row from the bilinear stencils.

    Row i holds the (at most 4T) interpolation coefficients of output pixel
    i; each timestep contributes its stencil with weight 1/T.  Guarded to
    small frames.
    """
    n = width * height
    if n > _ORACLE_MAX_PIXELS:
        raise ValueError(f"sparse oracle limited to {_ORACLE_MAX_PIXELS} pixels, got {n}")

    fld = offsets_from_trajectory(traj, intr, width, height)
    gx, gy = _pixel_grid(width, height)
    rows_idx = np.arange(n)

    acc = sp.csr_matrix((n, n))
    for t in range(fld.T):
        xs = (gx + fld.dx[t]).ravel()
        ys = (gy + fld.dy[t]).ravel()
        x0 = np.floor(xs).astype(np.int64)
        y0 = np.floor(ys).astype(np.int64)
        fx = xs - x0
        fy = ys - y0
        taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ]
        rows, cols, vals = [], [], []
        for tx, ty, tw in taps:
            if boundary is Boundary.ZERO:
                ok = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
                rows.append(rows_idx[ok])
                cols.append(ty[ok] * width + tx[ok])
                vals.append(tw[ok])
            else:
                cx = np.clip(tx, 0, width - 1)
                cy = np.clip(ty, 0, height - 1)
                rows.append(rows_idx)
                cols.append(cy * width + cx)
                vals.append(tw)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        acc = acc + mat.tocsr()
    return SparseBlurMatrix((acc * (1.0 / fld.T)).tocsr(), width, height)


def kernel_field(
    traj: Trajectory,
    intr: CameraIntrinsics,
    width: int,
    height: int,
    grid_step: int,
    patch: int,
) -> np.ndarray:
    """Mosaic of local blur kernels at grid points.

    Each cell is the oracle's response to a delta at the grid point (a
    matrix column), cropped to ``patch x patch`` around the point and
    normalized to [0, 1].
    """
    if patch < 3 or patch % 2 == 0:
        raise ValueError(f"patch size must be odd and >= 3, got {patch}")
    oracle = build_sparse_oracle(traj, intr, width, height, Boundary.ZERO)
    csc = oracle.matrix.tocsc()
    half = patch // 2

    xs = np.arange(grid_step // 2, width, grid_step)
    ys = np.arange(grid_step // 2, height, grid_step)
    mosaic = np.zeros((len(ys) * patch, len(xs) * patch))
    for r, py in enumerate(ys):
        for c, px in enumerate(xs):
            col = np.asarray(csc[:, py * width + px].todense()).reshape(height, width)
            padded = np.zeros((height + 2 * half, width + 2 * half))
            padded[half : half + height, half : half + width] = col
            cell = padded[py : py + patch, px : px + patch]
            peak = cell.max()
            if peak > 0:
                cell = cell / peak
            mosaic[r * patch : (r + 1) * patch, c * patch : (c + 1) * patch] = cell
    return mosaic


def save_offsets(fld: OffsetField, path: str | os.PathLike) -> None:
    """Dump an offset field: magic + u32 W, H, T + f32 dx then dy, t-major."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", fld.width, fld.height, fld.T))
        fh.write(fld.dx.astype("<f4").tobytes())
        fh.write(fld.dy.astype("<f4").tobytes())


def load_offsets(path: str | os.PathLike) -> OffsetField:
    """Read an offset field written by :func:`save_offsets`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise IOError(f"bad offset-field magic {magic!r} in {path}")
        width, height, t_steps = struct.unpack("<III", fh.read(12))
        count = width * height * t_steps
        dx = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64)
        dy = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64)
    if dx.size != count or dy.size != count:
        raise IOError(f"truncated offset-field file: {path}")
    shape = (t_steps, height, width)
    return OffsetField(width, height, dx.reshape(shape), dy.reshape(shape))
