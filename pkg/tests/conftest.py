"""Shared fixtures: small generated datasets reused across test modules.

The tiny datasets use a reduced mirror grid so scene placement and the
zoom-DFT stay fast; everything downstream (features, training, evaluation)
is exercised exactly as at full scale.
"""

import pytest

from slda.cascade import DatasetManifest, generate_records
from slda.datafile import read_dataset, write_dataset

TINY_ROWS, TINY_COLS = 160, 260


@pytest.fixture(scope="session")
def tiny_exp1_path(tmp_path_factory):
    manifest = DatasetManifest(
        experiment=1,
        grid_rows=TINY_ROWS,
        grid_cols=TINY_COLS,
        samples_per_category=10,
        seed=7,
    )
    path = tmp_path_factory.mktemp("data") / "exp1_tiny.slda"
    write_dataset(path, manifest, generate_records(manifest))
    return path


@pytest.fixture(scope="session")
def tiny_exp1(tiny_exp1_path):
    return read_dataset(tiny_exp1_path)


@pytest.fixture(scope="session")
def tiny_exp2_path(tmp_path_factory):
    manifest = DatasetManifest(
        experiment=2,
        grid_rows=TINY_ROWS,
        grid_cols=TINY_COLS,
        samples_per_category=7,
        seed=7,
    )
    path = tmp_path_factory.mktemp("data") / "exp2_tiny.slda"
    write_dataset(path, manifest, generate_records(manifest))
    return path


@pytest.fixture(scope="session")
def tiny_exp2(tiny_exp2_path):
    return read_dataset(tiny_exp2_path)
