import numpy as np
import pytest

from slda.features import (
    AugmentSchema,
    CORE_LENGTH,
    LabelError,
    apply_standardizer,
    augment,
    build_core_vector,
    build_v1,
    downsample,
    fit_standardizer,
    one_hot,
)
from slda.optics import CameraFrame
from slda.scene import ShapeKind

SCHEMA = AugmentSchema(
    geometry_classes=(ShapeKind.SQUARE, ShapeKind.TRIANGLE, ShapeKind.CIRCLE),
    size_classes=(11, 15, 21, 25),
)


class TestDownsample:
    def test_constant_image(self):
        out = downsample(np.full((400, 400), 42))
        assert out.shape == (5, 5)
        assert np.all(out == 42.0)

    def test_checkerboard_averages_to_midpoint(self):
        img = np.zeros((400, 400))
        img[::2, 1::2] = 255
        img[1::2, ::2] = 255
        assert np.all(downsample(img) == 127.5)

    def test_mean_preservation(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (400, 400)).astype(float)
        assert abs(downsample(img).mean() - img.mean()) <= 1e-12 * img.mean()

    def test_block_assignment(self):
        img = np.zeros((400, 400))
        img[:80, :80] = 255
        out = downsample(img)
        assert out[0, 0] == 255.0
        assert out.sum() == 255.0

    def test_monotone(self):
        rng = np.random.default_rng(1)
        a = rng.random((400, 400))
        b = a + rng.random((400, 400))
        assert np.all(downsample(b) >= downsample(a))

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            downsample(np.zeros((400, 401)))
        with pytest.raises(ValueError, match="divisible"):
            downsample(np.zeros((401, 401)))


class TestCoreVector:
    def test_zero_frame(self):
        frame = CameraFrame(np.zeros((400, 400), dtype=np.uint8), 0.0)
        assert np.array_equal(build_core_vector(frame), np.zeros(26))

    def test_block_and_power_layout(self):
        img = np.zeros((400, 400), dtype=np.uint8)
        img[:80, :80] = 255
        frame = CameraFrame(img, 3.25)
        vector = build_core_vector(frame)
        expected = np.zeros(26)
        expected[0] = 255.0
        expected[25] = 3.25
        assert np.array_equal(vector, expected)

    def test_length_is_26(self):
        rng = np.random.default_rng(2)
        frame = CameraFrame(rng.integers(0, 256, (400, 400)).astype(np.uint8), 7.0)
        assert build_core_vector(frame).shape == (CORE_LENGTH,)
        assert build_v1 is build_core_vector

    def test_pure_function(self):
        img = np.arange(160000, dtype=np.uint8).reshape(400, 400)
        frame = CameraFrame(img, 1.0)
        assert np.array_equal(build_core_vector(frame), build_core_vector(frame))


class TestAugment:
    def test_geometry_one_hot(self):
        v = np.arange(26.0)
        out = augment(v, SCHEMA, geometry=ShapeKind.TRIANGLE)
        assert out.shape == (29,)
        assert np.array_equal(out[26:], [0.0, 1.0, 0.0])

    def test_geometry_and_size(self):
        v = np.arange(26.0)
        out = augment(v, SCHEMA, geometry=ShapeKind.SQUARE, size=15)
        assert out.shape == (33,)
        assert np.array_equal(out[26:29], [1.0, 0.0, 0.0])
        assert np.array_equal(out[29:], [0.0, 1.0, 0.0, 0.0])

    def test_identity_without_labels(self):
        v = np.arange(26.0)
        out = augment(v, SCHEMA)
        assert np.array_equal(out, v)

    def test_size_without_geometry_rejected(self):
        with pytest.raises(ValueError, match="cascade"):
            augment(np.arange(26.0), SCHEMA, size=15)

    def test_unknown_label_rejected(self):
        with pytest.raises(LabelError):
            augment(np.arange(26.0), SCHEMA, geometry="hexagon")
        with pytest.raises(LabelError):
            one_hot(13, (11, 15, 21, 25))

    def test_one_hot_sums_to_one(self):
        for size in (11, 15, 21, 25):
            assert one_hot(size, (11, 15, 21, 25)).sum() == 1.0


class TestStandardizer:
    def test_zero_variance_rule(self):
        data = np.full((5, 3), 2.0)
        std = fit_standardizer(data)
        assert np.all(std.std == 1.0)
        assert np.all(apply_standardizer(std, data[0]) == 0.0)

    def test_z_score_arithmetic(self):
        data = np.array([[8.0], [12.0]])  # mean 10, deviation 2
        std = fit_standardizer(data)
        assert apply_standardizer(std, np.array([14.0]))[0] == pytest.approx(2.0)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        data = rng.normal(5, 3, (50, 26))
        std = fit_standardizer(data)
        z = apply_standardizer(std, data)
        back = z * std.std + std.mean
        assert np.abs(back - data).max() <= 1e-12 * np.abs(data).max()

    def test_needs_two_vectors(self):
        with pytest.raises(ValueError, match="2"):
            fit_standardizer(np.ones((1, 26)))

    def test_passthrough_columns(self):
        rng = np.random.default_rng(4)
        core = rng.normal(0, 5, (30, 26))
        tails = rng.integers(0, 2, (30, 3)).astype(float)
        std = fit_standardizer(np.hstack([core, tails]), passthrough=3)
        assert np.all(std.mean[-3:] == 0.0)
        assert np.all(std.std[-3:] == 1.0)
        out = apply_standardizer(std, np.hstack([core, tails]))
        assert np.array_equal(out[:, -3:], tails)

    def test_length_mismatch_rejected(self):
        std = fit_standardizer(np.random.default_rng(5).random((4, 26)))
        with pytest.raises(ValueError, match="length"):
            apply_standardizer(std, np.zeros(29))
