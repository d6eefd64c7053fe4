import numpy as np
import pytest

from slda.scene import (
    ALLOWED_SIZES,
    ApertureMask,
    DegenerateShapeError,
    ParticleSpec,
    PlacementError,
    SceneSpec,
    ShapeKind,
    place_particles,
    rasterize,
    shape_footprint,
)


def stencil_count_oracle(kind: ShapeKind, size: int) -> int:
    """Independent pixel-center count: loop over mirror centers, test the ideal shape."""
    n = 0
    height = np.sqrt(3.0) / 2.0 * size
    for i in range(size):
        for j in range(size):
            x = j + 0.5
            y = i + 0.5
            if kind == ShapeKind.SQUARE:
                inside = True
            elif kind == ShapeKind.CIRCLE:
                inside = (x - size / 2) ** 2 + (y - size / 2) ** 2 <= (size / 2) ** 2
            else:
                above = size - y
                inside = 0 <= above <= height and abs(x - size / 2) <= (
                    size / 2
                ) * (1 - above / height)
            n += inside
    return n


class TestShapeFootprint:
    def test_square_11_fills_box(self):
        stencil = shape_footprint(ShapeKind.SQUARE, 11)
        assert stencil.shape == (11, 11)
        assert stencil.sum() == 121
        assert np.all(stencil == 1)

    def test_circle_25_pixel_count(self):
        stencil = shape_footprint(ShapeKind.CIRCLE, 25)
        count = int(stencil.sum())
        assert count == stencil_count_oracle(ShapeKind.CIRCLE, 25) == 489
        area = np.pi * 25**2 / 4  # ~490.9
        assert abs(count - area) / area < 0.05

    def test_triangle_15_pixel_count(self):
        stencil = shape_footprint(ShapeKind.TRIANGLE, 15)
        count = int(stencil.sum())
        assert count == stencil_count_oracle(ShapeKind.TRIANGLE, 15) == 99
        area = np.sqrt(3) * 15**2 / 4  # ~97.4
        assert abs(count - area) / area < 0.10

    @pytest.mark.parametrize("kind", list(ShapeKind))
    @pytest.mark.parametrize("size", ALLOWED_SIZES)
    def test_matches_pixel_center_oracle(self, kind, size):
        assert shape_footprint(kind, size).sum() == stencil_count_oracle(kind, size)

    @pytest.mark.parametrize("kind", list(ShapeKind))
    def test_degenerate_size_rejected(self, kind):
        with pytest.raises(DegenerateShapeError):
            shape_footprint(kind, 2)

    @pytest.mark.parametrize("kind", [ShapeKind.SQUARE, ShapeKind.CIRCLE])
    @pytest.mark.parametrize("size", ALLOWED_SIZES)
    def test_square_and_circle_rotation_symmetry(self, kind, size):
        stencil = shape_footprint(kind, size)
        assert np.array_equal(stencil, np.rot90(stencil))

    @pytest.mark.parametrize("size", ALLOWED_SIZES)
    def test_triangle_mirror_symmetry(self, size):
        stencil = shape_footprint(ShapeKind.TRIANGLE, size)
        assert np.array_equal(stencil, np.fliplr(stencil))

    @pytest.mark.parametrize("kind", list(ShapeKind))
    def test_area_monotone_in_size(self, kind):
        counts = [shape_footprint(kind, s).sum() for s in ALLOWED_SIZES]
        assert all(a < b for a, b in zip(counts, counts[1:]))


class TestPlacement:
    def test_single_square_inside_grid(self):
        scene = place_particles(484, 861, [(ShapeKind.SQUARE, 11)], seed=0)
        assert len(scene.particles) == 1
        p = scene.particles[0]
        assert 0 <= p.row <= 484 - 11 and 0 <= p.col <= 861 - 11

    def test_seed_sensitivity(self):
        requests = [(ShapeKind.CIRCLE, 25)] * 5
        a = place_particles(484, 861, requests, seed=1)
        b = place_particles(484, 861, requests, seed=2)
        assert [(p.row, p.col) for p in a.particles] != [
            (p.row, p.col) for p in b.particles
        ]

    def test_determinism(self):
        requests = [(ShapeKind.TRIANGLE, 15)] * 4 + [(ShapeKind.SQUARE, 11)]
        a = place_particles(300, 500, requests, seed=99)
        b = place_particles(300, 500, requests, seed=99)
        assert a == b

    def test_impossible_packing_raises(self):
        with pytest.raises(PlacementError) as err:
            place_particles(100, 100, [(ShapeKind.SQUARE, 25)] * 2000, seed=0)
        assert err.value.particle_index < 2000

    def test_grid_smaller_than_particle(self):
        with pytest.raises(PlacementError):
            place_particles(10, 10, [(ShapeKind.SQUARE, 11)], seed=0)

    def test_margin_between_footprints(self):
        # dense packing: any adjacency violation would show up as touching pixels
        scene = place_particles(120, 120, [(ShapeKind.SQUARE, 11)] * 20, seed=3)
        grid = rasterize(scene).grid.astype(int)
        for p in scene.particles:
            r0, c0 = max(p.row - 1, 0), max(p.col - 1, 0)
            r1 = min(p.row + p.size_mirrors + 1, 120)
            c1 = min(p.col + p.size_mirrors + 1, 120)
            # the dilated neighborhood of this particle contains only itself
            assert grid[r0:r1, c0:c1].sum() == p.size_mirrors**2


class TestRasterize:
    def test_single_square_count(self):
        scene = SceneSpec(50, 50, (ParticleSpec(ShapeKind.SQUARE, 11, 5, 5),), 0)
        assert rasterize(scene).on_count == 121

    def test_two_squares_additive(self):
        scene = SceneSpec(
            60,
            60,
            (
                ParticleSpec(ShapeKind.SQUARE, 11, 0, 0),
                ParticleSpec(ShapeKind.SQUARE, 11, 30, 30),
            ),
            0,
        )
        assert rasterize(scene).on_count == 242

    def test_overlapping_scene_rejected(self):
        scene = SceneSpec(
            60,
            60,
            (
                ParticleSpec(ShapeKind.SQUARE, 11, 0, 0),
                ParticleSpec(ShapeKind.SQUARE, 11, 5, 5),
            ),
            0,
        )
        with pytest.raises(ValueError, match="overlap"):
            rasterize(scene)

    def test_placement_scenes_are_disjoint(self):
        scene = place_particles(200, 300, [(ShapeKind.CIRCLE, 21)] * 8, seed=5)
        expected = sum(
            int(shape_footprint(p.kind, p.size_mirrors).sum()) for p in scene.particles
        )
        assert rasterize(scene).on_count == expected

    def test_mask_on_count_field(self):
        mask = ApertureMask(np.eye(4, dtype=np.uint8))
        assert mask.on_count == 4


class TestSceneSpecValidation:
    def test_empty_scene_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            SceneSpec(100, 100, (), 0)

    def test_out_of_grid_particle_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            SceneSpec(100, 100, (ParticleSpec(ShapeKind.SQUARE, 11, 95, 0),), 0)

    def test_off_menu_size_rejected(self):
        with pytest.raises(ValueError, match="size_mirrors"):
            ParticleSpec(ShapeKind.SQUARE, 12, 0, 0)
