"""Shared fixtures: deterministic small datasets and one reusable table."""

import numpy as np
import pytest

from lasso_gate.calibration import calibrate
from lasso_gate.data import (
    Dataset,
    RngSpec,
    sample_covariance,
    spectral_decompose,
    standardize,
)


def standardized_dataset(seed: int, n: int, p: int) -> Dataset:
    """Standardized dataset with iid normal entries, pinned by seed."""
    gen = np.random.default_rng(seed)
    raw = Dataset.from_arrays(gen.standard_normal(n), gen.standard_normal((n, p)))
    return standardize(raw)


@pytest.fixture
def toy():
    """Tall instance (n=16, p=4): unpenalized fits are well posed."""
    return standardized_dataset(7, 16, 4)


@pytest.fixture
def wide():
    """Wide instance (n=12, p=30): the p > n regime the method targets."""
    return standardized_dataset(11, 12, 30)


@pytest.fixture(scope="session")
def demo_raw():
    """Unstandardized n=20, p=12 dataset reused by end-to-end tests."""
    gen = np.random.default_rng(105)
    y = 3.0 + 2.0 * gen.standard_normal(20)
    x = 1.7 * gen.standard_normal((20, 12)) + 0.4
    return Dataset.from_arrays(y, x)


@pytest.fixture(scope="session")
def demo_factor(demo_raw):
    return spectral_decompose(sample_covariance(standardize(demo_raw)))


@pytest.fixture(scope="session")
def demo_table(demo_raw, demo_factor):
    """Small downgraded table matching demo_raw's covariance factor."""
    return calibrate(
        demo_factor,
        demo_raw.n,
        (0, 1, 2),
        0.05,
        400,
        RngSpec(9301, 0),
        validation_replicates=200,
        threads=1,
        allow_small=True,
    )
