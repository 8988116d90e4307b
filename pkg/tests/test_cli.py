import json
import os

import numpy as np
import pytest

from pmblur.cli import main
from pmblur.image import load_png, save_png
from pmblur.trajectory import load_trajectory
from pmblur.evaluation import psnr


@pytest.fixture()
def sharp_png(tmp_path, crop128):
    path = tmp_path / "sharp.png"
    save_png(crop128, path)
    return path


def run(*args):
    return main([str(a) for a in args])


class TestGenTraj:
    def test_default_timesteps(self, tmp_path):
        out = tmp_path / "traj.json"
        assert run("gen-traj", "--out", out) == 0
        traj, focal = load_trajectory(out)
        assert traj.T == 25
        assert focal == 1000.0

    def test_timesteps_flag(self, tmp_path):
        out = tmp_path / "traj.json"
        assert run("gen-traj", "--out", out, "--timesteps", 9) == 0
        traj, _ = load_trajectory(out)
        assert traj.T == 9

    def test_seed_reproducible(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("--seed", 3, "gen-traj", "--out", a)
        run("--seed", 3, "gen-traj", "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestBlurDeblur:
    def test_zero_trajectory_roundtrip(self, tmp_path, sharp_png, crop128):
        traj = tmp_path / "zero.json"
        traj.write_text(json.dumps({"T": 4, "focal_px": 500.0, "angles_rad": [[0, 0, 0]] * 4}))
        out = tmp_path / "blurred.png"
        assert run("blur", "--input", sharp_png, "--traj", traj, "--out", out) == 0
        assert psnr(load_png(out), crop128) >= 50.0

    def test_saturate_caps_bright_input(self, tmp_path):
        bright = tmp_path / "bright.png"
        save_png(np.ones((32, 32)), bright)
        traj = tmp_path / "zero.json"
        traj.write_text(json.dumps({"T": 1, "focal_px": 500.0, "angles_rad": [[0, 0, 0]]}))
        out = tmp_path / "sat.png"
        assert run("blur", "--input", bright, "--traj", traj, "--out", out, "--saturate", 50) == 0
        assert load_png(out).max() <= 1.0

    def test_pipeline_self_consistency(self, tmp_path, sharp_png):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 9, "--amplitude-deg", 0.5)
        first = tmp_path / "b1.png"
        second = tmp_path / "b2.png"
        run("--focal-px", 500, "blur", "--input", sharp_png, "--traj", traj, "--out", first)
        run("--focal-px", 500, "blur", "--input", sharp_png, "--traj", traj, "--out", second)
        assert psnr(load_png(first), load_png(second)) == np.inf

    def test_deblur_improves(self, tmp_path, sharp_png, crop128):
        traj = tmp_path / "traj.json"
        run("--seed", 2, "gen-traj", "--out", traj, "--timesteps", 9, "--amplitude-deg", 0.8)
        blurred = tmp_path / "blurred.png"
        run("blur", "--input", sharp_png, "--traj", traj, "--out", blurred)
        restored = tmp_path / "restored.png"
        assert run("deblur", "--input", blurred, "--traj", traj, "--out", restored) == 0
        assert psnr(load_png(restored), crop128) > psnr(load_png(blurred), crop128)

    def test_rl_solver_dispatch(self, tmp_path, sharp_png):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 4, "--amplitude-deg", 0.3)
        blurred = tmp_path / "blurred.png"
        run("blur", "--input", sharp_png, "--traj", traj, "--out", blurred)
        restored = tmp_path / "rl.png"
        assert (
            run("deblur", "--input", blurred, "--traj", traj, "--out", restored,
                "--solver", "rl", "--rl-iters", 5)
            == 0
        )
        assert restored.exists()

    def test_bad_trajectory_exit_code(self, tmp_path, sharp_png):
        traj = tmp_path / "bad.json"
        traj.write_text("{not json")
        out = tmp_path / "out.png"
        assert run("deblur", "--input", sharp_png, "--traj", traj, "--out", out) == 2

    def test_missing_input_exit_code(self, tmp_path):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj)
        assert run("blur", "--input", tmp_path / "nope.png", "--traj", traj,
                   "--out", tmp_path / "o.png") == 2


class TestKernelsVideoEval:
    def test_kernels_mosaic_dimensions(self, tmp_path):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 4, "--amplitude-deg", 0.5)
        out = tmp_path / "kernels.png"
        assert run("--focal-px", 300, "kernels", "--traj", traj, "--size", 48, 48,
                   "--grid", 16, "--patch", 9, "--out", out) == 0
        mosaic = load_png(out)
        assert mosaic.shape == (27, 27)  # 3x3 grid cells of 9x9

    def test_video_frames(self, tmp_path, sharp_png):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 9, "--amplitude-deg", 0.5)
        outdir = tmp_path / "frames"
        assert run("--focal-px", 500, "video", "--input", sharp_png, "--traj", traj,
                   "--outdir", outdir) == 0
        frames = sorted(os.listdir(outdir))
        assert frames == [f"frame_{i:04d}.png" for i in range(9)]

    def test_video_ordered_is_permutation(self, tmp_path, sharp_png):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 9, "--amplitude-deg", 1.0)
        plain_dir = tmp_path / "plain"
        ordered_dir = tmp_path / "ordered"
        run("--focal-px", 500, "video", "--input", sharp_png, "--traj", traj, "--outdir", plain_dir)
        run("--focal-px", 500, "video", "--input", sharp_png, "--traj", traj,
            "--outdir", ordered_dir, "--ordered")
        plain = sorted((plain_dir / f).read_bytes() for f in os.listdir(plain_dir))
        ordered = sorted((ordered_dir / f).read_bytes() for f in os.listdir(ordered_dir))
        assert plain == ordered

    def test_eval_identical(self, tmp_path, sharp_png, capsys):
        assert run("eval", "--a", sharp_png, "--b", sharp_png) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["psnr"] == "inf"
        assert payload["ssim"] == pytest.approx(1.0)

    def test_eval_emd_self(self, tmp_path, sharp_png, capsys):
        traj = tmp_path / "traj.json"
        run("gen-traj", "--out", traj, "--timesteps", 5)
        assert run("eval", "--a", sharp_png, "--b", sharp_png,
                   "--traj-a", traj, "--traj-b", traj) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["emd"] == pytest.approx(0.0, abs=1e-12)


class TestBlind:
    def test_sharp_input_near_zero_trajectory(self, tmp_path, sharp_png):
        out_img = tmp_path / "restored.png"
        out_traj = tmp_path / "est.json"
        report = tmp_path / "report.json"
        assert run("--focal-px", 500, "blind", "--input", sharp_png,
                   "--out-image", out_img, "--out-traj", out_traj,
                   "--restarts", 1, "--timesteps", 4, "--report", report) == 0
        traj, _ = load_trajectory(out_traj)
        assert np.degrees(np.abs(traj.angles).max()) <= 0.1
        payload = json.loads(report.read_text())
        assert "loss_trace" in payload and "restart_losses" in payload


class TestSelftest:
    def test_passes_clean(self, capsys):
        assert run("selftest") == 0

    def test_fault_injection_fails(self, monkeypatch):
        monkeypatch.setenv("PMBLUR_SELFTEST_CORRUPT", "1")
        assert run("selftest") == 1
