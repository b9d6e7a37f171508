import numpy as np
import pytest

# discrete rate ladder used throughout the tests (Mbit/s)
RATE_VALUES = np.array([1.0, 6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0])
RATE_VALUES_WITH_ZERO = np.concatenate(([0.0], RATE_VALUES))


def random_rate_matrix(rng, num_users, num_channels, allow_zero=False):
    """Random matrix over the discrete rate ladder; every row kept positive."""
    values = RATE_VALUES_WITH_ZERO if allow_zero else RATE_VALUES
    m = rng.choice(values, size=(num_users, num_channels))
    for i in np.flatnonzero(~np.any(m > 0, axis=1)):
        m[i, rng.integers(num_channels)] = rng.choice(RATE_VALUES)
    return m


def random_column_stochastic(rng, num_users, num_channels):
    p = rng.random((num_users, num_channels)) + 1e-3
    return p / p.sum(axis=0, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
