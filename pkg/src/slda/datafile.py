"""Binary dataset container: JSON manifest plus fixed-width little-endian records.

Layout: 4-byte magic ``SLDA``, u16 format version, u32 length-prefixed JSON
manifest, then one block per record in category-major order: three u8 label
fields (geometry/size/count for experiment 1, pair/n1/n2 for experiment 2),
26 little-endian float32 features, the optional raw uint8 frame, and the
optional scene provenance (u64 seed, u16 particle count, then per particle
u8 kind, u8 size, u16 row, u16 col). Round-trips byte-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .cascade import DatasetManifest, Exp1Label, Exp2Label, Record
from .features import CORE_LENGTH
from .optics import OpticalConfig
from .scene import ParticleSpec, SceneSpec, ShapeKind

DATASET_MAGIC = b"SLDA"
DATASET_VERSION = 1

_LABEL_STRUCT = struct.Struct("<BBB")
_PROVENANCE_HEAD = struct.Struct("<QH")
_PARTICLE_STRUCT = struct.Struct("<BBHH")


class DatasetFormatError(ValueError):
    """File is not a dataset container this reader understands."""


def optics_to_dict(cfg: OpticalConfig) -> dict:
    return {
        "wavelength": cfg.wavelength,
        "mirror_pitch": cfg.mirror_pitch,
        "pad_size": cfg.pad_size,
        "crop_size": cfg.crop_size,
        "bit_depth": cfg.bit_depth,
        "noise_sigma": cfg.noise_sigma,
    }


def optics_from_dict(data: dict) -> OpticalConfig:
    return OpticalConfig(**data)


def optics_hash(cfg: OpticalConfig) -> str:
    blob = json.dumps(optics_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "experiment": manifest.experiment,
        "grid_rows": manifest.grid_rows,
        "grid_cols": manifest.grid_cols,
        "samples_per_category": manifest.samples_per_category,
        "seed": manifest.seed,
        "optics": optics_to_dict(manifest.optics),
        "optics_hash": optics_hash(manifest.optics),
        "categories": len(manifest.categories),
        "total": manifest.total,
        "keep_frames": manifest.keep_frames,
        "feature_length": CORE_LENGTH,
    }


def manifest_from_dict(data: dict) -> DatasetManifest:
    manifest = DatasetManifest(
        experiment=data["experiment"],
        grid_rows=data["grid_rows"],
        grid_cols=data["grid_cols"],
        samples_per_category=data["samples_per_category"],
        seed=data["seed"],
        optics=optics_from_dict(data["optics"]),
        keep_frames=data["keep_frames"],
    )
    if data["total"] != manifest.total or data["categories"] != len(manifest.categories):
        raise DatasetFormatError("manifest totals are inconsistent with its parameters")
    return manifest


def _label_codes(label) -> tuple[int, int, int]:
    if isinstance(label, Exp1Label):
        return int(label.geometry), label.size_class, label.count
    if isinstance(label, Exp2Label):
        return label.pair_index, label.n1, label.n2
    raise TypeError(f"unknown label type {type(label)!r}")


def label_from_codes(experiment: int, codes) -> Exp1Label | Exp2Label:
    a, b, c = (int(v) for v in codes)
    if experiment == 1:
        return Exp1Label(ShapeKind(a), b, c)
    return Exp2Label(a, b, c)


def write_dataset(path, manifest: DatasetManifest, records) -> int:
    """Stream records into a dataset file; returns the number written.

    The record count must equal the manifest total or the file is invalid;
    a mismatch raises after writing (the file is left behind for debugging).
    """
    blob = json.dumps(manifest_to_dict(manifest), sort_keys=True).encode("utf-8")
    written = 0
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<H", DATASET_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for record in records:
            fh.write(_LABEL_STRUCT.pack(*_label_codes(record.label)))
            fh.write(np.ascontiguousarray(record.features, dtype="<f4").tobytes())
            if manifest.keep_frames:
                fh.write(np.ascontiguousarray(record.frame, dtype=np.uint8).tobytes())
            scene = record.scene
            fh.write(_PROVENANCE_HEAD.pack(scene.seed, len(scene.particles)))
            for p in scene.particles:
                fh.write(_PARTICLE_STRUCT.pack(int(p.kind), p.size_mirrors, p.row, p.col))
            written += 1
    if written != manifest.total:
        raise DatasetFormatError(
            f"wrote {written} records but manifest declares {manifest.total}"
        )
    return written


@dataclass
class Dataset:
    """In-memory view of a dataset file."""

    manifest: DatasetManifest
    label_codes: np.ndarray  # (n, 3) uint8
    features: np.ndarray  # (n, 26) float32
    scenes: list[SceneSpec]
    frames: np.ndarray | None  # (n, crop, crop) uint8 when stored and loaded

    def __len__(self) -> int:
        return self.label_codes.shape[0]

    @property
    def category_indices(self) -> np.ndarray:
        """Category of each record (records are written category-major)."""
        return np.arange(len(self)) // self.manifest.samples_per_category

    def label(self, index: int) -> Exp1Label | Exp2Label:
        return label_from_codes(self.manifest.experiment, self.label_codes[index])

    def labels(self) -> list:
        return [self.label(i) for i in range(len(self))]


def read_dataset(path, load_frames: bool = False) -> Dataset:
    """Read a dataset file; frames are skipped unless requested."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}; not a dataset file")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != DATASET_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {version}")
        (length,) = struct.unpack("<I", fh.read(4))
        manifest = manifest_from_dict(json.loads(fh.read(length).decode("utf-8")))
        n = manifest.total
        crop = manifest.optics.crop_size
        frame_bytes = crop * crop
        label_codes = np.empty((n, 3), dtype=np.uint8)
        feats = np.empty((n, CORE_LENGTH), dtype=np.float32)
        scenes: list[SceneSpec] = []
        frames = (
            np.empty((n, crop, crop), dtype=np.uint8)
            if (manifest.keep_frames and load_frames)
            else None
        )
        for i in range(n):
            label_codes[i] = _LABEL_STRUCT.unpack(fh.read(_LABEL_STRUCT.size))
            feats[i] = np.frombuffer(fh.read(4 * CORE_LENGTH), dtype="<f4")
            if manifest.keep_frames:
                raw = fh.read(frame_bytes)
                if frames is not None:
                    frames[i] = np.frombuffer(raw, dtype=np.uint8).reshape(crop, crop)
            seed, n_particles = _PROVENANCE_HEAD.unpack(fh.read(_PROVENANCE_HEAD.size))
            particles = []
            for _ in range(n_particles):
                kind, size, row, col = _PARTICLE_STRUCT.unpack(
                    fh.read(_PARTICLE_STRUCT.size)
                )
                particles.append(ParticleSpec(ShapeKind(kind), size, row, col))
            scenes.append(
                SceneSpec(manifest.grid_rows, manifest.grid_cols, tuple(particles), seed)
            )
        trailing = fh.read(1)
        if trailing:
            raise DatasetFormatError("trailing bytes after the declared record count")
    return Dataset(manifest, label_codes, feats, scenes, frames)
