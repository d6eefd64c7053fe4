"""Run configuration: defaults, JSON loading, and the resolved-config echo."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .neuralnet import TrainConfig
from .optics import OpticalConfig
from .scene import DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on; one master seed drives it all."""

    experiment: int = 1
    seed: int = 12345
    samples_per_category: int = 100
    # scene
    grid_rows: int = DEFAULT_GRID_ROWS
    grid_cols: int = DEFAULT_GRID_COLS
    # optics
    wavelength: float = 405e-9
    mirror_pitch: float = 7.63e-6
    pad_size: int = 2048
    crop_size: int = 400
    bit_depth: int = 8
    noise_sigma: float = 0.0
    # training
    max_epochs: int = 1000
    patience: int = 20
    scg_sigma: float = 5e-5
    scg_lambda: float = 5e-7
    # artifacts and execution
    out_dir: str = "runs"
    dataset_path: str = ""  # default: <out_dir>/exp<N>_dataset.slda
    model_dir: str = ""  # default: <out_dir>/models
    keep_frames: bool = False
    threads: int = 1
    strict: bool = True

    def __post_init__(self):
        if self.experiment not in (1, 2):
            raise ValueError("experiment must be 1 or 2")
        for name in ("wavelength", "mirror_pitch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.samples_per_category < 1:
            raise ValueError("samples_per_category must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def resolved_dataset_path(self) -> Path:
        if self.dataset_path:
            return Path(self.dataset_path)
        return Path(self.out_dir) / f"exp{self.experiment}_dataset.slda"

    @property
    def resolved_model_dir(self) -> Path:
        return Path(self.model_dir) if self.model_dir else Path(self.out_dir) / "models"

    @property
    def report_dir(self) -> Path:
        return Path(self.out_dir) / "reports"

    def optics(self) -> OpticalConfig:
        return OpticalConfig(
            wavelength=self.wavelength,
            mirror_pitch=self.mirror_pitch,
            pad_size=self.pad_size,
            crop_size=self.crop_size,
            bit_depth=self.bit_depth,
            noise_sigma=self.noise_sigma,
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.max_epochs,
            patience=self.patience,
            sigma=self.scg_sigma,
            lambda_init=self.scg_lambda,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def write_echo(self, directory) -> Path:
        """Persist the fully resolved configuration next to the run's outputs."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "config.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        return path


def load_config(path, **overrides) -> RunConfig:
    """Read a JSON config file and apply keyword overrides on top."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(RunConfig(**data), **overrides)
