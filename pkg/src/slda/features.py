"""Image pre-processing into feature vectors: block averaging, power, one-hot tails.

The core vector holds the row-major 5x5 block-averaged camera image followed
by the power-meter reading, 26 values in total. Cascade stages append one-hot
encodings of upstream labels to it. A z-score standardizer (fitted on training
data only) keeps sigmoid inputs bounded; one-hot tail columns pass through
unscaled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optics import CameraFrame

CORE_LENGTH = 26
DOWNSAMPLE_GRID = 5


class LabelError(ValueError):
    """A label does not belong to the schema it is encoded against."""


def downsample(image: np.ndarray, grid: int = DOWNSAMPLE_GRID) -> np.ndarray:
    """Average square pixel blocks down to a grid x grid image.

    The input must be square with a side divisible by ``grid`` (400x400 in
    the default capture geometry, giving 80x80 blocks).
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"expected a square 2-D image, got shape {image.shape}")
    side = image.shape[0]
    if side % grid:
        raise ValueError(f"image side {side} not divisible into {grid}x{grid} blocks")
    block = side // grid
    return image.reshape(grid, block, grid, block).mean(axis=(1, 3))


def build_core_vector(frame: CameraFrame) -> np.ndarray:
    """26-element feature vector: flattened 5x5 down-sampled image + power reading."""
    values = np.empty(CORE_LENGTH, dtype=np.float64)
    values[:25] = downsample(frame.image).ravel()
    values[25] = frame.power_reading
    return values


# Alias matching the stage-one vector's conventional name.
build_v1 = build_core_vector


def one_hot(label, classes: Sequence) -> np.ndarray:
    """Indicator vector of ``label`` within the ordered class list."""
    try:
        index = list(classes).index(label)
    except ValueError:
        raise LabelError(f"label {label!r} not in classes {list(classes)!r}") from None
    encoded = np.zeros(len(classes), dtype=np.float64)
    encoded[index] = 1.0
    return encoded


@dataclass(frozen=True)
class AugmentSchema:
    """Ordered class lists for the geometry and size one-hot tails."""

    geometry_classes: tuple
    size_classes: tuple


def augment(
    vector: np.ndarray,
    schema: AugmentSchema,
    geometry=None,
    size=None,
) -> np.ndarray:
    """Append one-hot label encodings to a core vector, in schema order.

    Passing only ``geometry`` yields the stage-two input, passing both yields
    the stage-three input, and passing neither returns the vector unchanged.
    A size label without a geometry label violates the cascade ordering.
    """
    if size is not None and geometry is None:
        raise ValueError("size label requires a geometry label (cascade ordering)")
    parts = [np.asarray(vector, dtype=np.float64)]
    if geometry is not None:
        parts.append(one_hot(geometry, schema.geometry_classes))
    if size is not None:
        parts.append(one_hot(size, schema.size_classes))
    return np.concatenate(parts)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score parameters; trailing passthrough columns untouched."""

    mean: np.ndarray
    std: np.ndarray
    passthrough: int = 0  # number of trailing columns (one-hot tails) left as-is


def fit_standardizer(vectors: np.ndarray, passthrough: int = 0) -> Standardizer:
    """Fit per-feature mean/deviation on training vectors (rows).

    Features with zero variance get deviation 1 so standardization is always
    defined; the last ``passthrough`` columns are recorded as identity.
    """
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("standardizer fitting needs at least 2 training vectors")
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std[std == 0.0] = 1.0
    if passthrough:
        mean[-passthrough:] = 0.0
        std[-passthrough:] = 1.0
    return Standardizer(mean, std, passthrough)


def apply_standardizer(standardizer: Standardizer, vectors: np.ndarray) -> np.ndarray:
    """Z-score one vector or a matrix of row vectors."""
    data = np.asarray(vectors, dtype=np.float64)
    if data.shape[-1] != standardizer.mean.shape[0]:
        raise ValueError(
            f"feature length {data.shape[-1]} does not match standardizer "
            f"({standardizer.mean.shape[0]})"
        )
    return (data - standardizer.mean) / standardizer.std
