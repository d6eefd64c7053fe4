"""Experiment label spaces, synthetic dataset generation, and cascaded prediction.

Experiment 1: single-geometry samples over 3 shapes x 4 sizes x 1..5 particles
(60 categories). Experiment 2: two-geometry mixtures at fixed size 15 over
3 shape pairs and every split n1 + n2 = N for N in 2..10, including the pure
endpoints (189 categories). Every category contributes the same number of
samples; per-sample seeds are a pure function of (global seed, category index,
sample index), so generation is reproducible and order-independent.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import features
from .features import AugmentSchema, build_core_vector, one_hot
from .neuralnet import forward, predict
from .optics import CameraFrame, OpticalConfig, simulate_frame
from .scene import (
    DEFAULT_GRID_COLS,
    DEFAULT_GRID_ROWS,
    PlacementError,
    SceneSpec,
    ShapeKind,
    place_particles,
    rasterize,
)

GEOMETRIES = (ShapeKind.SQUARE, ShapeKind.TRIANGLE, ShapeKind.CIRCLE)
SIZE_CLASSES = (11, 15, 21, 25)
EXP1_COUNTS = (1, 2, 3, 4, 5)

PAIRS = (
    (ShapeKind.SQUARE, ShapeKind.TRIANGLE),
    (ShapeKind.SQUARE, ShapeKind.CIRCLE),
    (ShapeKind.TRIANGLE, ShapeKind.CIRCLE),
)
PAIR_LABELS = tuple(f"{a.label}+{b.label}" for a, b in PAIRS)
EXP2_SIZE = 15
EXP2_TOTALS = tuple(range(2, 11))
DOMINANT_CLASSES = ("geometry1", "geometry2", "balanced")

SAMPLES_PER_CATEGORY = 100

EXP1_SCHEMA = AugmentSchema(geometry_classes=GEOMETRIES, size_classes=SIZE_CLASSES)


@dataclass(frozen=True)
class Exp1Label:
    """Single-geometry category: shape, characteristic size, particle count."""

    geometry: ShapeKind
    size_class: int
    count: int


@dataclass(frozen=True)
class Exp2Label:
    """Two-geometry mixture category: pair index and the per-shape counts."""

    pair_index: int  # into PAIRS
    n1: int
    n2: int

    @property
    def pair(self) -> tuple[ShapeKind, ShapeKind]:
        return PAIRS[self.pair_index]

    @property
    def total(self) -> int:
        return self.n1 + self.n2

    @property
    def dominant(self) -> int:
        """0 if geometry 1 dominates, 1 if geometry 2 does, 2 if balanced."""
        if self.n1 > self.n2:
            return 0
        if self.n2 > self.n1:
            return 1
        return 2

    @property
    def is_mixed(self) -> bool:
        return self.n1 > 0 and self.n2 > 0


def enumerate_categories(experiment: int) -> list:
    """Ordered category labels for an experiment (60 for #1, 189 for #2)."""
    if experiment == 1:
        return [
            Exp1Label(geometry, size, count)
            for geometry in GEOMETRIES
            for size in SIZE_CLASSES
            for count in EXP1_COUNTS
        ]
    if experiment == 2:
        return [
            Exp2Label(pair_index, n1, total - n1)
            for pair_index in range(len(PAIRS))
            for total in EXP2_TOTALS
            for n1 in range(total + 1)
        ]
    raise ValueError(f"unknown experiment id {experiment}; expected 1 or 2")


def scene_requests(label) -> list[tuple[ShapeKind, int]]:
    """Particle (shape, size) requests realizing a category label."""
    if isinstance(label, Exp1Label):
        return [(label.geometry, label.size_class)] * label.count
    g1, g2 = label.pair
    return [(g1, EXP2_SIZE)] * label.n1 + [(g2, EXP2_SIZE)] * label.n2


def derive_seed(master_seed: int, *path: int) -> int:
    """Collision-resistant 64-bit seed from a master seed and an integer path.

    All randomness in a run (scene placement, splits, weight init, noise)
    derives from the master seed through disjoint paths, so a single seed
    reproduces everything.
    """
    ss = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def sample_seed(global_seed: int, category_index: int, sample_index: int) -> int:
    """Derived per-sample scene seed (counter-mixed over category and sample)."""
    return derive_seed(global_seed, 0, category_index, sample_index)


@dataclass(frozen=True)
class DatasetManifest:
    """Everything needed to (re)generate a dataset deterministically."""

    experiment: int
    grid_rows: int = DEFAULT_GRID_ROWS
    grid_cols: int = DEFAULT_GRID_COLS
    samples_per_category: int = SAMPLES_PER_CATEGORY
    seed: int = 0
    optics: OpticalConfig = OpticalConfig()
    keep_frames: bool = False

    @property
    def categories(self) -> list:
        return enumerate_categories(self.experiment)

    @property
    def total(self) -> int:
        return len(self.categories) * self.samples_per_category


@dataclass
class Record:
    """One generated sample: labels, features, provenance, optional raw frame."""

    category_index: int
    label: object
    features: np.ndarray  # float32, length 26
    scene: SceneSpec
    frame: np.ndarray | None = None  # uint8 (crop, crop) when kept


def _make_record(
    manifest: DatasetManifest, category_index: int, sample_index: int
) -> Record:
    label = manifest.categories[category_index]
    seed = sample_seed(manifest.seed, category_index, sample_index)
    try:
        scene = place_particles(
            manifest.grid_rows, manifest.grid_cols, scene_requests(label), seed
        )
    except PlacementError as err:
        raise PlacementError(
            err.particle_index,
            err.attempts,
            context=f"category {category_index} {label}, sample {sample_index}",
        ) from None
    mask = rasterize(scene)
    rng = (
        np.random.default_rng([seed, 1]) if manifest.optics.noise_sigma > 0.0 else None
    )
    frame = simulate_frame(mask, manifest.optics, rng)
    vector = build_core_vector(frame).astype(np.float32)
    return Record(
        category_index,
        label,
        vector,
        scene,
        frame.image if manifest.keep_frames else None,
    )


def _category_records(args: tuple[DatasetManifest, int]) -> list[Record]:
    manifest, category_index = args
    return [
        _make_record(manifest, category_index, i)
        for i in range(manifest.samples_per_category)
    ]


def generate_records(
    manifest: DatasetManifest, workers: int = 1
) -> Iterator[Record]:
    """Yield all records in category-major order, optionally in parallel.

    Each record depends only on its derived seed, so parallel workers produce
    the same stream as a serial run.
    """
    n_cats = len(manifest.categories)
    if workers <= 1:
        for c in range(n_cats):
            yield from _category_records((manifest, c))
        return
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        tasks = ((manifest, c) for c in range(n_cats))
        for batch in pool.map(_category_records, tasks):
            yield from batch


@dataclass(frozen=True)
class CascadeStage:
    """A trained network plus its input standardizer and class labels."""

    model: object
    standardizer: object
    class_labels: tuple


@dataclass(frozen=True)
class Exp1Models:
    """The three chained networks of experiment 1."""

    geometry: CascadeStage
    size: CascadeStage
    count: CascadeStage

    def __post_init__(self):
        check_stage_widths(
            [self.geometry, self.size, self.count],
            [features.CORE_LENGTH, len(GEOMETRIES), len(SIZE_CLASSES)],
        )


@dataclass(frozen=True)
class Exp2Models:
    """The four networks of experiment 2 (dominance split by count parity)."""

    pair: CascadeStage
    count: CascadeStage
    dominant_even: CascadeStage
    dominant_odd: CascadeStage

    def __post_init__(self):
        check_stage_widths(
            [self.pair, self.count, self.dominant_even],
            [features.CORE_LENGTH, len(PAIRS), len(EXP2_TOTALS)],
        )
        check_stage_widths(
            [self.pair, self.count, self.dominant_odd],
            [features.CORE_LENGTH, len(PAIRS), len(EXP2_TOTALS)],
        )


def check_stage_widths(stages: list[CascadeStage], widths: list[int]) -> None:
    """Reject bundles whose declared input sizes do not chain with the one-hot tails."""
    expected = 0
    for stage, width in zip(stages, widths):
        expected += width
        got = stage.model.layer_sizes[0]
        if got != expected:
            raise ValueError(
                f"stage input size {got} does not chain (expected {expected})"
            )


def predict_exp1(frame: CameraFrame, models: Exp1Models):
    """Run the three-stage cascade on one camera frame.

    Each stage consumes the previous stage's hard prediction as a one-hot
    tail. Returns ((geometry, size, count), per-stage probability vectors).
    """
    v1 = build_core_vector(frame)
    g_idx, g_probs = predict(models.geometry.model, models.geometry.standardizer, v1)
    geometry = GEOMETRIES[g_idx]
    v2 = np.concatenate([v1, one_hot(geometry, GEOMETRIES)])
    s_idx, s_probs = predict(models.size.model, models.size.standardizer, v2)
    size = SIZE_CLASSES[s_idx]
    v3 = np.concatenate([v2, one_hot(size, SIZE_CLASSES)])
    c_idx, c_probs = predict(models.count.model, models.count.standardizer, v3)
    count = EXP1_COUNTS[c_idx]
    return (geometry, size, count), (g_probs, s_probs, c_probs)


def predict_exp2(frame: CameraFrame, models: Exp2Models):
    """Run the experiment-2 cascade on one camera frame.

    The dominance stage is routed to the even or odd network by the parity of
    the predicted total count; only the even network can output "balanced".
    Returns ((pair label, total, dominant label), per-stage probabilities).
    """
    v1 = build_core_vector(frame)
    p_idx, p_probs = predict(models.pair.model, models.pair.standardizer, v1)
    v2 = np.concatenate([v1, one_hot(p_idx, range(len(PAIRS)))])
    n_idx, n_probs = predict(models.count.model, models.count.standardizer, v2)
    total = EXP2_TOTALS[n_idx]
    v3 = np.concatenate([v2, one_hot(total, EXP2_TOTALS)])
    stage = models.dominant_even if total % 2 == 0 else models.dominant_odd
    d_idx, d_probs = predict(stage.model, stage.standardizer, v3)
    return (PAIR_LABELS[p_idx], total, DOMINANT_CLASSES[d_idx]), (
        p_probs,
        n_probs,
        d_probs,
    )


def cascade_exp1_batch(
    core: np.ndarray, models: Exp1Models
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized end-to-end experiment-1 cascade over rows of core vectors.

    Returns (geometry index, size index, count index) arrays.
    """
    core = np.asarray(core, dtype=np.float64)
    g = _stage_argmax(models.geometry, core)
    v2 = np.hstack([core, _indicator(g, len(GEOMETRIES))])
    s = _stage_argmax(models.size, v2)
    v3 = np.hstack([v2, _indicator(s, len(SIZE_CLASSES))])
    c = _stage_argmax(models.count, v3)
    return g, s, c


def cascade_exp2_batch(
    core: np.ndarray, models: Exp2Models
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized end-to-end experiment-2 cascade over rows of core vectors.

    Returns (pair index, total index, dominant index) arrays; the dominant
    index is into DOMINANT_CLASSES.
    """
    core = np.asarray(core, dtype=np.float64)
    p = _stage_argmax(models.pair, core)
    v2 = np.hstack([core, _indicator(p, len(PAIRS))])
    n = _stage_argmax(models.count, v2)
    v3 = np.hstack([v2, _indicator(n, len(EXP2_TOTALS))])
    totals = np.asarray(EXP2_TOTALS)[n]
    even = totals % 2 == 0
    d = np.empty(len(core), dtype=np.int64)
    if np.any(even):
        d[even] = _stage_argmax(models.dominant_even, v3[even])
    if np.any(~even):
        d[~even] = _stage_argmax(models.dominant_odd, v3[~even])
    return p, n, d


def _stage_argmax(stage: CascadeStage, X: np.ndarray) -> np.ndarray:
    probs = forward(stage.model, features.apply_standardizer(stage.standardizer, X))
    return np.argmax(np.atleast_2d(probs), axis=1)


def _indicator(indices: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(indices), width), dtype=np.float64)
    out[np.arange(len(indices)), indices] = 1.0
    return out
