"""Command-line front end.

Exit codes: 0 success, 1 compute failure (divergence), 2 input or
validation error.  All randomized behavior is routed through ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from pmblur.blur import (
    AdjointMode,
    BlurOperator,
    adjoint,
    blur_efficient,
    blur_naive,
    build_sparse_oracle,
    kernel_field,
    offsets_from_trajectory,
    saturate,
)
from pmblur.evaluation import psnr, render_video, ssim, synth_pair
from pmblur.geometry import CameraIntrinsics, jacobian_det, homography_from_pose, Pose
from pmblur.image import Boundary, load_png, save_png
from pmblur.refine import RefineConfig, blind_deblur
from pmblur.restoration import AdmmConfig, DivergenceError, admm_deblur, richardson_lucy
from pmblur.trajectory import (
    Trajectory,
    TremorConfig,
    emd_distance,
    generate_tremor,
    load_trajectory,
    make_grid,
    save_trajectory,
)

log = logging.getLogger("pmblur")


def _intrinsics_for(img: np.ndarray, focal: float) -> CameraIntrinsics:
    return CameraIntrinsics.for_frame(focal, img.shape[1], img.shape[0])


def cmd_gen_traj(args) -> int:
    cfg = TremorConfig(
        timesteps=args.timesteps,
        amplitude_deg=args.amplitude_deg,
        band=(args.band[0], args.band[1]),
        exposure=args.exposure,
        seed=args.seed,
        centered=args.centered,
    )
    traj = generate_tremor(cfg)
    save_trajectory(traj, args.focal_px, args.out)
    log.info("wrote %d-pose trajectory to %s", traj.T, args.out)
    return 0


def cmd_blur(args) -> int:
    u = load_png(args.input)
    traj, focal = load_trajectory(args.traj)
    op = BlurOperator.from_trajectory(traj, _intrinsics_for(u, focal), u.shape[1], u.shape[0])
    v = blur_efficient(u, op)
    if args.saturate is not None:
        v = saturate(v, args.saturate)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        v = np.clip(v + args.noise * rng.standard_normal(v.shape), 0.0, 1.0)
    save_png(v, args.out)
    return 0


def cmd_deblur(args) -> int:
    v = load_png(args.input)
    traj, focal = load_trajectory(args.traj)
    op = BlurOperator.from_trajectory(traj, _intrinsics_for(v, focal), v.shape[1], v.shape[0])
    if args.solver == "admm":
        cfg = AdmmConfig.from_json(args.admm_config) if args.admm_config else AdmmConfig()
        restored = admm_deblur(v, op, cfg)
    else:
        restored = richardson_lucy(v, op, iters=args.rl_iters)
    save_png(restored, args.out)
    return 0


def cmd_blind(args) -> int:
    v = load_png(args.input)
    cfg = RefineConfig(
        restarts=args.restarts,
        pyramid_levels=args.pyramid,
        seed=args.seed,
        timesteps=args.timesteps,
    )
    admm = AdmmConfig.from_json(args.admm_config) if args.admm_config else AdmmConfig()
    report = blind_deblur(v, _intrinsics_for(v, args.focal_px), cfg, admm)
    save_png(report.restored, args.out_image)
    save_trajectory(report.trajectory, args.focal_px, args.out_traj)
    if args.report:
        report.to_json(args.report, args.focal_px)
    log.info("final reblur loss %.6g over %d restarts", report.final_loss, len(report.restart_losses))
    return 0


def cmd_kernels(args) -> int:
    traj, focal = load_trajectory(args.traj)
    width, height = args.size
    intr = CameraIntrinsics.for_frame(focal, width, height)
    mosaic = kernel_field(traj, intr, width, height, args.grid, args.patch)
    save_png(mosaic, args.out)
    return 0


def cmd_video(args) -> int:
    u = load_png(args.input)
    traj, focal = load_trajectory(args.traj)
    frames = render_video(u, traj, _intrinsics_for(u, focal), ordered=args.ordered)
    os.makedirs(args.outdir, exist_ok=True)
    for i, frame in enumerate(frames):
        save_png(frame, os.path.join(args.outdir, f"frame_{i:04d}.png"))
    log.info("wrote %d frames to %s", len(frames), args.outdir)
    return 0


def cmd_eval(args) -> int:
    a = load_png(args.a)
    b = load_png(args.b)
    p = psnr(a, b)
    metrics = {"psnr": "inf" if math.isinf(p) else p, "ssim": ssim(a, b)}
    if args.traj_a and args.traj_b:
        ta, focal = load_trajectory(args.traj_a)
        tb, _ = load_trajectory(args.traj_b)
        intr = _intrinsics_for(a, focal)
        metrics["emd"] = emd_distance(ta, tb, intr, make_grid(a.shape[1], a.shape[0]))
    json.dump(metrics, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_selftest(args) -> int:
    """Desk-scale consistency checks: adjointness, Jacobian audit, oracle match."""
    rng = np.random.default_rng(args.seed)
    failures = []
    corrupt = os.environ.get("PMBLUR_SELFTEST_CORRUPT") == "1"

    # operator equivalence against the sparse oracle
    w, h = 12, 12
    intr = CameraIntrinsics.for_frame(80.0, w, h)
    traj = generate_tremor(TremorConfig(timesteps=9, amplitude_deg=0.4, seed=args.seed))
    op = BlurOperator.from_trajectory(traj, intr, w, h, boundary=Boundary.ZERO)
    oracle = build_sparse_oracle(traj, intr, w, h)
    if corrupt:  # fault-injection hook for testing the self-test itself
        from pmblur.blur import OffsetField

        bad = OffsetField(w, h, op.forward.dx + 0.25, op.forward.dy + 0.25)
        op = BlurOperator(traj, intr, w, h, bad, op.adjoint_mode, op.boundary)
    u = rng.random((h, w))
    err_naive = np.abs(blur_naive(u, op) - oracle.apply(u)).max()
    err_eff = np.abs(blur_efficient(u, op) - blur_naive(u, op)).max()
    ok = err_naive < 1e-10 and err_eff < 1e-12
    print(f"[{'PASS' if ok else 'FAIL'}] operator equivalence (naive {err_naive:.2e}, efficient {err_eff:.2e})")
    if not ok:
        failures.append("operator equivalence")

    # adjointness on a mid-size frame
    w, h = 64, 64
    intr = CameraIntrinsics.for_frame(400.0, w, h)
    traj = generate_tremor(TremorConfig(timesteps=9, amplitude_deg=1.0, seed=args.seed + 1))
    op = BlurOperator.from_trajectory(traj, intr, w, h, boundary=Boundary.ZERO)
    u = rng.random((h, w))
    gx, gy = np.meshgrid(np.arange(w), np.arange(h))
    probe = np.exp(-(((gx - w / 2) ** 2 + (gy - h / 2) ** 2) / (2.0 * 3.0**2)))
    lhs = float(np.sum(probe * blur_naive(u, op)))
    rhs = float(np.sum(adjoint(probe, op) * u))
    rel = abs(lhs - rhs) / abs(lhs)
    ok = rel < 0.01
    print(f"[{'PASS' if ok else 'FAIL'}] adjoint inner-product consistency (rel {rel:.2e})")
    if not ok:
        failures.append("adjointness")

    # Jacobian audit: roll exact, pitch/yaw near 1
    intr = CameraIntrinsics.for_frame(1000.0, 1024, 680)
    xs = np.linspace(0, 1023, 9)
    ys = np.linspace(0, 679, 9)
    gx, gy = np.meshgrid(xs, ys)
    worst = 0.0
    for angle in np.linspace(-math.radians(1.6), math.radians(1.6), 7):
        for pose in (Pose(theta_x=angle), Pose(theta_y=angle)):
            dets = jacobian_det(homography_from_pose(pose, intr), gx, gy)
            worst = max(worst, float(np.abs(dets - 1).max()))
    roll_det = jacobian_det(homography_from_pose(Pose(theta_z=0.3), intr), gx, gy)
    roll_err = float(np.abs(roll_det - 1).max())
    ok = worst < 0.05 and roll_err < 1e-10
    print(f"[{'PASS' if ok else 'FAIL'}] Jacobian audit (pitch/yaw dev {worst:.2e}, roll dev {roll_err:.2e})")
    if not ok:
        failures.append("jacobian")

    if failures:
        print(f"selftest FAILED: {', '.join(failures)}")
        return 1
    print("selftest passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmblur", description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--focal-px", type=float, default=1000.0)
    parser.add_argument("--threads", type=int, default=0, help="cap internal parallelism (0 = auto)")
    parser.add_argument("--log-level", default="WARNING")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-traj", help="generate a seeded tremor trajectory")
    p.add_argument("--out", required=True)
    p.add_argument("--timesteps", type=int, default=25)
    p.add_argument("--amplitude-deg", type=float, default=0.5)
    p.add_argument("--band", type=float, nargs=2, default=[6.0, 12.0], metavar=("F_LO", "F_HI"))
    p.add_argument("--exposure", type=float, default=0.5)
    p.add_argument("--centered", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_gen_traj)

    p = sub.add_parser("blur", help="apply trajectory blur to an image")
    p.add_argument("--input", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--saturate", type=float, default=None, metavar="A")
    p.add_argument("--noise", type=float, default=0.0, metavar="SIGMA")
    p.set_defaults(func=cmd_blur)

    p = sub.add_parser("deblur", help="non-blind restoration with a known trajectory")
    p.add_argument("--input", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--solver", choices=["admm", "rl"], default="admm")
    p.add_argument("--admm-config")
    p.add_argument("--rl-iters", type=int, default=30)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("blind", help="blind deblurring with trajectory estimation")
    p.add_argument("--input", required=True)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-traj", required=True)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--pyramid", type=int, default=2)
    p.add_argument("--timesteps", type=int, default=9)
    p.add_argument("--report")
    p.add_argument("--admm-config")
    p.set_defaults(func=cmd_blind)

    p = sub.add_parser("kernels", help="render the local blur-kernel mosaic")
    p.add_argument("--traj", required=True)
    p.add_argument("--size", type=int, nargs=2, required=True, metavar=("W", "H"))
    p.add_argument("--grid", type=int, default=16, help="grid step in pixels")
    p.add_argument("--patch", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("video", help="render per-pose warped frames")
    p.add_argument("--input", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--ordered", action="store_true")
    p.set_defaults(func=cmd_video)

    p = sub.add_parser("eval", help="PSNR/SSIM between two images, optional trajectory EMD")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--traj-a")
    p.add_argument("--traj-b")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="run desk-scale consistency checks")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    if args.threads > 0:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except DivergenceError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
