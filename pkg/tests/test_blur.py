import math

import numpy as np
import pytest

from pmblur.blur import (
    AdjointMode,
    BlurOperator,
    OffsetField,
    adjoint,
    blur_efficient,
    blur_naive,
    build_sparse_oracle,
    kernel_field,
    load_offsets,
    offsets_from_trajectory,
    saturate,
    save_offsets,
    _tap_lattice,
)
from pmblur.geometry import CameraIntrinsics
from pmblur.image import Boundary
from pmblur.trajectory import Trajectory, TremorConfig, generate_tremor


def small_traj(t, seed, scale=0.005):
    rng = np.random.default_rng(seed)
    return Trajectory(rng.uniform(-scale, scale, (t, 3)))


class TestOffsets:
    def test_zero_trajectory(self):
        intr = CameraIntrinsics.for_frame(500.0, 16, 16)
        fld = offsets_from_trajectory(Trajectory.zero(4), intr, 16, 16)
        assert not fld.dx.any() and not fld.dy.any()

    def test_roll_fixes_principal_point(self):
        intr = CameraIntrinsics.for_frame(500.0, 17, 17)
        tr = Trajectory(np.array([[0, 0, 0.05], [0, 0, -0.08]]))
        fld = offsets_from_trajectory(tr, intr, 17, 17)
        # principal point is the exact center of a 17x17 frame
        assert abs(fld.dx[:, 8, 8]).max() < 1e-10
        assert abs(fld.dy[:, 8, 8]).max() < 1e-10

    def test_yaw_central_displacement(self):
        intr = CameraIntrinsics(focal=1000.0, cx=8.0, cy=8.0)
        tr = Trajectory(np.array([[0.0, 0.01, 0.0]]))
        fld = offsets_from_trajectory(tr, intr, 17, 17)
        assert abs(fld.dx[0, 8, 8]) == pytest.approx(1000.0 * math.tan(0.01), rel=1e-4)
        assert abs(fld.dy[0, 8, 8]) < 1e-9

    def test_dump_round_trip(self, tmp_path):
        intr = CameraIntrinsics.for_frame(400.0, 12, 10)
        fld = offsets_from_trajectory(small_traj(3, 0), intr, 12, 10)
        path = tmp_path / "offsets.bin"
        save_offsets(fld, path)
        back = load_offsets(path)
        assert (back.width, back.height, back.T) == (12, 10, 3)
        np.testing.assert_allclose(back.dx, fld.dx, atol=1e-6)
        np.testing.assert_allclose(back.dy, fld.dy, atol=1e-6)

    def test_dump_header(self, tmp_path):
        intr = CameraIntrinsics.for_frame(400.0, 4, 5)
        fld = offsets_from_trajectory(Trajectory.zero(2), intr, 4, 5)
        path = tmp_path / "offsets.bin"
        save_offsets(fld, path)
        raw = path.read_bytes()
        assert raw[:4] == b"PMBM"
        assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [4, 5, 2]
        assert len(raw) == 16 + 2 * 4 * 4 * 5 * 2

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(IOError):
            load_offsets(path)


class TestBlurEquivalence:
    def test_identity_single_timestep(self):
        rng = np.random.default_rng(0)
        u = rng.random((8, 8))
        intr = CameraIntrinsics.for_frame(500.0, 8, 8)
        op = BlurOperator.from_trajectory(Trajectory.zero(1), intr, 8, 8)
        np.testing.assert_array_equal(blur_naive(u, op), u)
        np.testing.assert_array_equal(blur_efficient(u, op), u)

    def test_constant_preserved_clamp(self):
        intr = CameraIntrinsics.for_frame(300.0, 16, 16)
        op = BlurOperator.from_trajectory(small_traj(9, 1), intr, 16, 16)
        out = blur_naive(np.full((16, 16), 0.4), op)
        np.testing.assert_allclose(out, 0.4, atol=1e-12)

    @pytest.mark.parametrize("t", [4, 9, 16, 25])
    def test_efficient_matches_naive(self, t):
        rng = np.random.default_rng(t)
        u = rng.random((12, 12))
        intr = CameraIntrinsics.for_frame(400.0, 12, 12)
        op = BlurOperator.from_trajectory(small_traj(t, t), intr, 12, 12)
        np.testing.assert_allclose(blur_efficient(u, op), blur_naive(u, op), atol=1e-12)

    def test_efficient_matches_naive_color(self):
        rng = np.random.default_rng(9)
        u = rng.random((10, 10, 3))
        intr = CameraIntrinsics.for_frame(400.0, 10, 10)
        op = BlurOperator.from_trajectory(small_traj(9, 2), intr, 10, 10)
        np.testing.assert_allclose(blur_efficient(u, op), blur_naive(u, op), atol=1e-12)

    def test_tap_lattice_25(self):
        taps = _tap_lattice(25)
        want = {(dx, dy) for dx in range(-2, 3) for dy in range(-2, 3)}
        assert {tuple(p) for p in taps} == want

    def test_linearity(self):
        rng = np.random.default_rng(3)
        u, w = rng.random((9, 9)), rng.random((9, 9))
        intr = CameraIntrinsics.for_frame(400.0, 9, 9)
        op = BlurOperator.from_trajectory(small_traj(4, 4), intr, 9, 9)
        for fn in (blur_naive, blur_efficient):
            np.testing.assert_allclose(
                fn(0.2 * u + 0.8 * w, op), 0.2 * fn(u, op) + 0.8 * fn(w, op), atol=1e-9
            )

    def test_shape_mismatch(self):
        intr = CameraIntrinsics.for_frame(400.0, 8, 8)
        op = BlurOperator.from_trajectory(Trajectory.zero(4), intr, 8, 8)
        with pytest.raises(ValueError):
            blur_naive(np.zeros((9, 9)), op)


class TestSparseOracle:
    def test_identity_trajectory(self):
        intr = CameraIntrinsics.for_frame(400.0, 6, 6)
        mat = build_sparse_oracle(Trajectory.zero(3), intr, 6, 6)
        dense = mat.matrix.toarray()
        np.testing.assert_allclose(dense, np.eye(36), atol=1e-15)

    def test_row_sums(self):
        intr = CameraIntrinsics.for_frame(200.0, 8, 8)
        mat = build_sparse_oracle(small_traj(4, 5), intr, 8, 8)
        sums = np.asarray(mat.matrix.sum(axis=1)).ravel()
        assert sums.max() <= 1 + 1e-12

    def test_matches_blur_naive(self):
        rng = np.random.default_rng(6)
        intr = CameraIntrinsics.for_frame(300.0, 8, 8)
        tr = small_traj(9, 6)
        mat = build_sparse_oracle(tr, intr, 8, 8)
        op = BlurOperator.from_trajectory(tr, intr, 8, 8, boundary=Boundary.ZERO)
        u = rng.random((8, 8))
        np.testing.assert_allclose(mat.apply(u), blur_naive(u, op), atol=1e-10)

    def test_size_guard(self):
        intr = CameraIntrinsics.for_frame(300.0, 128, 128)
        with pytest.raises(ValueError):
            build_sparse_oracle(Trajectory.zero(2), intr, 128, 128)


class TestAdjoint:
    def test_identity_both_modes(self):
        rng = np.random.default_rng(7)
        w = rng.random((8, 8))
        intr = CameraIntrinsics.for_frame(400.0, 8, 8)
        for mode in AdjointMode:
            op = BlurOperator.from_trajectory(Trajectory.zero(4), intr, 8, 8, adjoint_mode=mode)
            np.testing.assert_allclose(adjoint(w, op), w, atol=1e-12)

    def test_against_sparse_transpose(self):
        rng = np.random.default_rng(8)
        intr = CameraIntrinsics.for_frame(300.0, 8, 8)
        tr = small_traj(4, 8, scale=math.radians(0.5))
        mat = build_sparse_oracle(tr, intr, 8, 8)
        op = BlurOperator.from_trajectory(tr, intr, 8, 8, boundary=Boundary.ZERO)
        w = rng.random((8, 8))
        want = mat.apply_transpose(w)
        got = adjoint(w, op)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 2e-2

    def test_inner_product_consistency(self, camera):
        t = 9
        angles = np.zeros((t, 3))
        angles[:, 0] = np.radians(np.linspace(-2, 2, t))
        intr = CameraIntrinsics.for_frame(700.0, 512, 512)
        op = BlurOperator.from_trajectory(Trajectory(angles), intr, 512, 512)
        bu = blur_efficient(camera, op)
        gy, gx = np.meshgrid(np.arange(512) - 256.0, np.arange(512) - 256.0, indexing="ij")
        w = np.exp(-(gx**2 + gy**2) / (2 * 20.0**2))
        lhs = float(np.sum(w * bu))
        rhs = float(np.sum(adjoint(w, op) * camera))
        assert abs(lhs - rhs) / abs(lhs) < 0.01

    def test_negated_mode_close_at_small_angles(self, camera):
        crop = camera[:256, :256]
        intr = CameraIntrinsics.for_frame(300.0, 256, 256)
        tr = generate_tremor(TremorConfig(timesteps=9, amplitude_deg=1.0, seed=5))
        ops = {
            mode: BlurOperator.from_trajectory(tr, intr, 256, 256, adjoint_mode=mode)
            for mode in AdjointMode
        }
        exact = adjoint(crop, ops[AdjointMode.EXACT_INVERSE])
        approx = adjoint(crop, ops[AdjointMode.NEGATED_FORWARD])
        assert np.linalg.norm(exact - approx) / np.linalg.norm(exact) <= 1e-2


class TestSaturate:
    def test_value_at_zero(self):
        assert abs(saturate(np.array([0.0]))[0]) < 1e-20

    def test_value_at_one(self):
        assert saturate(np.array([1.0]))[0] == pytest.approx(1 - math.log(2) / 50, abs=1e-12)

    def test_plateau(self):
        assert abs(saturate(np.array([2.0]))[0] - 1.0) < 1e-9

    def test_monotone_and_bounded(self):
        xs = np.linspace(0, 2, 2001)
        ys = saturate(xs)
        assert (np.diff(ys) >= -1e-12).all()
        assert (ys <= np.minimum(xs, 1.0) + 1e-9).all()

    def test_bad_sharpness(self):
        with pytest.raises(ValueError):
            saturate(np.array([0.5]), a=0.0)


class TestKernelField:
    def test_identity_is_delta_mosaic(self):
        intr = CameraIntrinsics.for_frame(300.0, 32, 32)
        mosaic = kernel_field(Trajectory.zero(4), intr, 32, 32, grid_step=16, patch=5)
        # each cell holds a single bright pixel at its center
        cells = mosaic.reshape(mosaic.shape[0] // 5, 5, mosaic.shape[1] // 5, 5)
        for i in range(cells.shape[0]):
            for j in range(cells.shape[2]):
                cell = cells[i, :, j, :]
                assert cell[2, 2] == pytest.approx(1.0)
                assert cell.sum() == pytest.approx(1.0)

    def test_roll_kernels_grow_off_center(self):
        intr = CameraIntrinsics.for_frame(300.0, 33, 33)
        tr = Trajectory(np.column_stack([np.zeros(5), np.zeros(5), np.radians(np.linspace(-4, 4, 5))]))
        mat = build_sparse_oracle(tr, intr, 33, 33)
        csc = mat.matrix.tocsc()

        def support(x, y):
            col = csc[:, y * 33 + x].toarray().ravel()
            return int((col > 1e-9).sum())

        assert support(16, 16) < support(2, 2)
        assert support(16, 16) < support(30, 30)

    def test_interior_mass(self):
        intr = CameraIntrinsics.for_frame(300.0, 32, 32)
        mat = build_sparse_oracle(small_traj(4, 10), intr, 32, 32)
        col = mat.matrix.tocsc()[:, 16 * 32 + 16].toarray()
        assert col.sum() == pytest.approx(1.0, abs=1e-4)


class TestOffsetFieldValidation:
    def test_nonfinite_rejected(self):
        dx = np.zeros((2, 4, 4))
        dy = np.zeros((2, 4, 4))
        dx[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            OffsetField(4, 4, dx, dy)
