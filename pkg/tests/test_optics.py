import math

import numpy as np
import pytest

from slda.optics import (
    CameraFrame,
    ConfigurationError,
    FarFieldPattern,
    OpticalConfig,
    UndefinedOverlapError,
    UnsupportedShapeOracleError,
    analytic_far_field,
    capture,
    far_field,
    overlap,
    read_pgm,
    simulate_frame,
    write_pattern_csv,
    write_pgm,
)
from slda.scene import ApertureMask, ParticleSpec, SceneSpec, ShapeKind, rasterize

CFG = OpticalConfig()
P = CFG.pad_size
C = P // 2  # DC index after shifting


def centered_particle_mask(kind: ShapeKind, size: int) -> ApertureMask:
    row = (484 - size) // 2
    col = (861 - size) // 2
    return rasterize(SceneSpec(484, 861, (ParticleSpec(kind, size, row, col),), 0))


def square_mask(row: int, col: int, size: int = 11, rows: int = 484, cols: int = 861):
    return rasterize(SceneSpec(rows, cols, (ParticleSpec(ShapeKind.SQUARE, size, row, col),), 0))


@pytest.fixture(scope="module")
def square11():
    return far_field(centered_particle_mask(ShapeKind.SQUARE, 11), CFG)


class TestConfig:
    def test_angular_calibration(self):
        # 200 * lambda / (P * pitch) with defaults
        expected = 200 * 405e-9 / (2048 * 7.63e-6)
        assert CFG.crop_half_angle == pytest.approx(expected, rel=1e-12)
        assert CFG.crop_half_angle == pytest.approx(5.1838e-3, rel=1e-3)
        assert CFG.crop_half_angle_deg == pytest.approx(0.29701, rel=1e-3)
        # within 15% of the 0.26 degree collection half-angle this models
        assert abs(CFG.crop_half_angle_deg - 0.26) / 0.26 < 0.15

    def test_pad_size_must_be_power_of_two(self):
        with pytest.raises(ConfigurationError):
            OpticalConfig(pad_size=1000)

    def test_crop_cannot_exceed_pad(self):
        with pytest.raises(ConfigurationError):
            OpticalConfig(pad_size=256, crop_size=400)

    def test_mask_must_fit(self):
        mask = ApertureMask(np.ones((300, 300), dtype=np.uint8))
        with pytest.raises(ConfigurationError):
            far_field(mask, OpticalConfig(pad_size=256, crop_size=100))


class TestFarField:
    def test_parseval(self, square11):
        # unnormalized forward DFT: total intensity = P^2 * on_count
        expected = P**2 * 121
        assert abs(square11.total_power - expected) / expected <= 1e-9

    def test_parseval_multi_particle(self):
        scene = SceneSpec(
            484,
            861,
            (
                ParticleSpec(ShapeKind.TRIANGLE, 15, 50, 100),
                ParticleSpec(ShapeKind.CIRCLE, 21, 300, 600),
                ParticleSpec(ShapeKind.SQUARE, 25, 150, 400),
            ),
            0,
        )
        mask = rasterize(scene)
        pattern = far_field(mask, CFG)
        expected = P**2 * mask.on_count
        assert abs(pattern.total_power - expected) / expected <= 1e-9

    def test_centrosymmetry(self, square11):
        interior = square11.intensity[1:, 1:]
        deviation = np.abs(interior - interior[::-1, ::-1]).max()
        assert deviation / square11.intensity.max() <= 1e-9

    def test_non_negative_and_dc_peak(self, square11):
        assert (square11.intensity >= 0).all()
        assert square11.intensity.argmax() == C * P + C
        assert square11.intensity[C, C] == pytest.approx(121**2, rel=1e-12)

    def test_square_first_zero_position(self, square11):
        # closed-form oracle: sinc zero at P/11 = 186.2 bins ~ 4.83 mrad
        row = square11.intensity[C]
        offsets = np.arange(170, 200)
        sim_min = offsets[np.argmin(row[C + offsets])]
        f = offsets / P
        oracle_min = offsets[np.argmin(np.sinc(11 * f) ** 2)]
        assert sim_min == oracle_min == 186
        angle = sim_min * CFG.angle_per_bin
        assert angle == pytest.approx(405e-9 / (11 * 7.63e-6), rel=0.01)
        assert row[C + sim_min] / row[C] < 1e-4

    def test_translation_leaves_intensity(self):
        a = far_field(square_mask(100, 200), CFG).intensity
        b = far_field(square_mask(317, 555), CFG).intensity
        assert np.abs(a - b).max() <= 1e-9 * a.max()

    def test_translation_leaves_camera_frame(self):
        frame_a = capture(far_field(square_mask(100, 200), CFG), CFG)
        frame_b = capture(far_field(square_mask(317, 555), CFG), CFG)
        assert np.array_equal(frame_a.image, frame_b.image)

    def test_two_square_interference_fringes(self):
        # exact two-source identity: I_pair = 4 cos^2(pi*D*m/P) * I_single
        D = 40
        single = far_field(square_mask(200, 300, 15), CFG).intensity
        pair = rasterize(
            SceneSpec(
                484,
                861,
                (
                    ParticleSpec(ShapeKind.SQUARE, 15, 200, 300),
                    ParticleSpec(ShapeKind.SQUARE, 15, 200, 300 + D),
                ),
                0,
            )
        )
        pattern = far_field(pair, CFG).intensity
        m = np.arange(P) - C
        fringe = 4.0 * np.cos(np.pi * D * m / P) ** 2
        row_pair = pattern[C]
        row_pred = single[C] * fringe
        keep = single[C] > 1e-9 * single[C].max()
        assert np.allclose(row_pair[keep], row_pred[keep], rtol=1e-7)


class TestCapture:
    def test_constant_crop_saturates(self):
        pattern = FarFieldPattern(np.full((P, P), 3.7), CFG.angle_per_bin)
        frame = capture(pattern, CFG)
        assert (frame.image == 255).all()

    def test_zero_crop(self):
        pattern = FarFieldPattern(np.zeros((P, P)), CFG.angle_per_bin)
        frame = capture(pattern, CFG)
        assert (frame.image == 0).all()
        assert frame.power_reading == 0.0

    def test_scale_invariance_of_image(self, square11):
        doubled = FarFieldPattern(2.0 * square11.intensity, CFG.angle_per_bin)
        f1 = capture(square11, CFG)
        f2 = capture(doubled, CFG)
        assert np.array_equal(f1.image, f2.image)
        assert f2.power_reading == pytest.approx(2 * f1.power_reading, rel=1e-12)

    def test_power_is_crop_sum(self, square11):
        frame = capture(square11, CFG)
        lo = C - 200
        crop = square11.intensity[lo : lo + 400, lo : lo + 400]
        assert frame.power_reading == crop.sum()

    def test_noise_requires_rng_and_changes_image(self, square11):
        noisy_cfg = OpticalConfig(noise_sigma=0.05)
        with pytest.raises(ValueError, match="generator"):
            capture(square11, noisy_cfg)
        clean = capture(square11, CFG)
        noisy = capture(square11, noisy_cfg, np.random.default_rng(0))
        assert not np.array_equal(clean.image, noisy.image)
        # power meter sits upstream of the camera noise
        assert noisy.power_reading == clean.power_reading

    def test_quantization_range(self, square11):
        frame = capture(square11, CFG)
        assert frame.image.dtype == np.uint8
        assert frame.image.max() == 255


class TestSimulateFrame:
    def test_matches_two_step_path(self):
        scene = SceneSpec(
            484,
            861,
            (
                ParticleSpec(ShapeKind.TRIANGLE, 15, 100, 200),
                ParticleSpec(ShapeKind.CIRCLE, 21, 300, 600),
            ),
            0,
        )
        mask = rasterize(scene)
        reference = capture(far_field(mask, CFG), CFG)
        fused = simulate_frame(mask, CFG)
        assert np.array_equal(reference.image, fused.image)
        assert fused.power_reading == pytest.approx(reference.power_reading, rel=1e-12)

    def test_deterministic(self):
        mask = square_mask(40, 80)
        a = simulate_frame(mask, CFG)
        b = simulate_frame(mask, CFG)
        assert np.array_equal(a.image, b.image)
        assert a.power_reading == b.power_reading


class TestOverlap:
    def test_self_overlap_is_exactly_one(self, square11):
        lo = C - 200
        crop = square11.intensity[lo : lo + 400, lo : lo + 400]
        assert overlap(crop, crop) == 1.0

    def test_disjoint_supports(self):
        a = np.zeros((8, 8))
        b = np.zeros((8, 8))
        a[:4] = 1.0
        b[4:] = 1.0
        assert overlap(a, b) == 0.0

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(0)
        a = rng.random((32, 32))
        b = rng.random((32, 32))
        assert overlap(a, b) == pytest.approx(overlap(b, a), rel=1e-12)
        assert overlap(3.0 * a, b) == pytest.approx(overlap(a, 7.0 * b), rel=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.random((16, 16))
            b = rng.random((16, 16))
            assert 0.0 <= overlap(a, b) <= 1.0

    def test_zero_total_rejected(self):
        with pytest.raises(UndefinedOverlapError):
            overlap(np.zeros((4, 4)), np.ones((4, 4)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            overlap(np.ones((4, 4)), np.ones((5, 5)))

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            overlap(-np.ones((4, 4)), np.ones((4, 4)))


class TestAnalyticOracle:
    @pytest.mark.parametrize("kind,size", [(ShapeKind.SQUARE, 11), (ShapeKind.CIRCLE, 25)])
    def test_overlap_with_simulation(self, kind, size):
        sim = far_field(centered_particle_mask(kind, size), CFG)
        oracle = analytic_far_field(kind, size, CFG)
        lo = C - 200
        sl = slice(lo, lo + 400)
        omega = overlap(sim.intensity[sl, sl], oracle.intensity[sl, sl])
        assert omega > 0.9

    def test_square_dc_is_global_max(self):
        pattern = analytic_far_field(ShapeKind.SQUARE, 11, CFG)
        assert pattern.intensity.argmax() == C * P + C

    def test_airy_first_dark_ring(self):
        # 1.22 * lambda / (25 * pitch) ~ 2.59 mrad ~ bin 100
        pattern = analytic_far_field(ShapeKind.CIRCLE, 25, CFG)
        row = pattern.intensity[C]
        offsets = np.arange(90, 110)
        minimum = offsets[np.argmin(row[C + offsets])]
        expected_angle = 1.22 * 405e-9 / (25 * 7.63e-6)
        assert minimum == round(expected_angle / CFG.angle_per_bin) == 100

    def test_triangle_unsupported(self):
        with pytest.raises(UnsupportedShapeOracleError):
            analytic_far_field(ShapeKind.TRIANGLE, 15, CFG)


class TestExports:
    def test_pgm_round_trip(self, tmp_path, square11):
        frame = capture(square11, CFG)
        path = tmp_path / "frame.pgm"
        write_pgm(path, frame)
        back = read_pgm(path)
        assert np.array_equal(back, frame.image)

    def test_pgm_header(self, tmp_path, square11):
        path = tmp_path / "frame.pgm"
        write_pgm(path, capture(square11, CFG))
        header = path.read_bytes()[:20]
        assert header.startswith(b"P5\n400 400\n255\n")

    def test_pattern_csv(self, tmp_path):
        small = FarFieldPattern(np.arange(16.0).reshape(4, 4), 1.0)
        path = tmp_path / "pattern.csv"
        write_pattern_csv(path, small)
        back = np.loadtxt(path, delimiter=",")
        assert np.array_equal(back, small.intensity)
