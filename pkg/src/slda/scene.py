"""Random particle scenes on a micromirror grid, rasterized to binary aperture masks.

Particles are flat binary footprints (square, upright triangle, circle) stamped
onto a grid of on/off mirrors. Scenes are placed by seeded rejection sampling
with pixel-exact non-overlap plus a one-mirror margin, so generation is
reproducible and footprint areas are additive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# Default chip: 3.69 mm x 6.57 mm of 7.63 um mirrors.
DEFAULT_GRID_ROWS = 484
DEFAULT_GRID_COLS = 861

# Characteristic lengths (mirror units) a placed particle may take:
# square side, equilateral-triangle side, or circle diameter.
ALLOWED_SIZES = (11, 15, 21, 25)

DEFAULT_MAX_ATTEMPTS = 10_000


class ShapeKind(enum.IntEnum):
    """Particle footprint shapes. Integer codes are stable for serialization."""

    SQUARE = 0
    TRIANGLE = 1
    CIRCLE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class DegenerateShapeError(ValueError):
    """Requested footprint too small to rasterize meaningfully."""


class PlacementError(RuntimeError):
    """Rejection sampling could not place a particle without overlap."""

    def __init__(self, particle_index: int, attempts: int, context: str = ""):
        self.particle_index = particle_index
        self.attempts = attempts
        message = f"could not place particle {particle_index} after {attempts} attempts"
        super().__init__(message + (f" ({context})" if context else ""))


@dataclass(frozen=True)
class ParticleSpec:
    """One particle: shape, characteristic length, and bounding-box top-left corner."""

    kind: ShapeKind
    size_mirrors: int
    row: int
    col: int

    def __post_init__(self):
        if self.size_mirrors not in ALLOWED_SIZES:
            raise ValueError(
                f"size_mirrors must be one of {ALLOWED_SIZES}, got {self.size_mirrors}"
            )


@dataclass(frozen=True)
class SceneSpec:
    """A full particle arrangement on the grid plus the seed that produced it."""

    grid_rows: int
    grid_cols: int
    particles: tuple[ParticleSpec, ...]
    seed: int

    def __post_init__(self):
        if len(self.particles) < 1:
            raise ValueError("a scene must contain at least one particle")
        for i, p in enumerate(self.particles):
            if not (
                0 <= p.row
                and 0 <= p.col
                and p.row + p.size_mirrors <= self.grid_rows
                and p.col + p.size_mirrors <= self.grid_cols
            ):
                raise ValueError(f"particle {i} bounding box falls outside the grid")


@dataclass(frozen=True)
class ApertureMask:
    """Binary on/off mirror grid and its total on-mirror count."""

    grid: np.ndarray  # uint8, shape (grid_rows, grid_cols), values in {0, 1}
    on_count: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "on_count", int(self.grid.sum()))


def shape_footprint(kind: ShapeKind, size_mirrors: int) -> np.ndarray:
    """Binary stencil of a shape inside a size x size bounding box.

    A mirror is on iff its center lies inside the ideal shape: the square
    fills the box, the circle is a centered disk of diameter ``size_mirrors``
    (exact integer-arithmetic test, no float ties), and the triangle is
    upright and equilateral with its base along the bottom edge of the box.
    """
    s = int(size_mirrors)
    if s < 3:
        raise DegenerateShapeError(f"footprint size must be >= 3 mirrors, got {s}")
    if kind == ShapeKind.SQUARE:
        return np.ones((s, s), dtype=np.uint8)
    if kind == ShapeKind.CIRCLE:
        # center (2i+1-s, 2j+1-s)/2 inside radius s/2: all integer after scaling by 2
        i = 2 * np.arange(s) + 1 - s
        d2 = i[:, None] ** 2 + i[None, :] ** 2
        return (d2 <= s * s).astype(np.uint8)
    if kind == ShapeKind.TRIANGLE:
        height = np.sqrt(3.0) / 2.0 * s
        y_above_base = s - (np.arange(s) + 0.5)  # distance of row centers above the base
        half_width = (s / 2.0) * (1.0 - y_above_base / height)
        half_width[y_above_base > height] = -1.0
        x_off = np.abs(np.arange(s) + 0.5 - s / 2.0)
        return (x_off[None, :] <= half_width[:, None]).astype(np.uint8)
    raise ValueError(f"unknown shape kind: {kind!r}")


def _dilated(stencil: np.ndarray) -> np.ndarray:
    """Stencil grown by one mirror in every direction (3x3 max filter, padded)."""
    s = stencil.shape[0]
    out = np.zeros((s + 2, s + 2), dtype=np.uint8)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            np.maximum(out[dr : dr + s, dc : dc + s], stencil, out=out[dr : dr + s, dc : dc + s])
    return out


def place_particles(
    grid_rows: int,
    grid_cols: int,
    requests: list[tuple[ShapeKind, int]],
    seed: int,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> SceneSpec:
    """Place the requested particles uniformly at random without overlap.

    Positions are drawn by rejection sampling from a generator seeded with
    ``seed``; footprints must stay pixel-disjoint with a one-mirror margin.
    Raises :class:`PlacementError` naming the first particle that cannot be
    placed within ``max_attempts`` draws.
    """
    rng = np.random.default_rng(int(seed))
    # blocked = union of already-placed footprints dilated by the margin
    blocked = np.zeros((grid_rows, grid_cols), dtype=np.uint8)
    placed: list[ParticleSpec] = []
    for index, (kind, size) in enumerate(requests):
        stencil = shape_footprint(kind, size)
        grown = _dilated(stencil)
        s = int(size)
        if grid_rows < s or grid_cols < s:
            raise PlacementError(index, 0)
        for attempt in range(max_attempts):
            r = int(rng.integers(0, grid_rows - s + 1))
            c = int(rng.integers(0, grid_cols - s + 1))
            region = blocked[r : r + s, c : c + s]
            if not np.any(region & stencil):
                placed.append(ParticleSpec(kind, s, r, c))
                # grown covers grid rows r-1 .. r+s inclusive; clip at the edges
                r0, c0 = max(r - 1, 0), max(c - 1, 0)
                r1, c1 = min(r + s + 1, grid_rows), min(c + s + 1, grid_cols)
                gr, gc = r0 - (r - 1), c0 - (c - 1)
                np.maximum(
                    blocked[r0:r1, c0:c1],
                    grown[gr : gr + (r1 - r0), gc : gc + (c1 - c0)],
                    out=blocked[r0:r1, c0:c1],
                )
                break
        else:
            raise PlacementError(index, max_attempts)
    return SceneSpec(grid_rows, grid_cols, tuple(placed), int(seed))


def rasterize(scene: SceneSpec) -> ApertureMask:
    """Stamp every particle stencil onto the grid.

    The on-mirror count must equal the sum of the individual stencil counts;
    a mismatch means the scene violates the non-overlap invariant.
    """
    grid = np.zeros((scene.grid_rows, scene.grid_cols), dtype=np.uint8)
    expected = 0
    for p in scene.particles:
        stencil = shape_footprint(p.kind, p.size_mirrors)
        expected += int(stencil.sum())
        np.maximum(
            grid[p.row : p.row + p.size_mirrors, p.col : p.col + p.size_mirrors],
            stencil,
            out=grid[p.row : p.row + p.size_mirrors, p.col : p.col + p.size_mirrors],
        )
    mask = ApertureMask(grid)
    if mask.on_count != expected:
        raise ValueError("scene contains overlapping particle footprints")
    return mask
