import numpy as np
import pytest

from vapl.data import SyntheticSpec, generate_dataset


@pytest.fixture(scope="session")
def tiny_splits():
    """Small dataset shared by the slower training tests."""
    spec = SyntheticSpec(n_train=64, n_val=32, n_test=64, seed=0)
    return generate_dataset(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(a, b):
    denom = np.maximum(1e-8, np.maximum(np.abs(a), np.abs(b)))
    return np.max(np.abs(a - b) / denom)
