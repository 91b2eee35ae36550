import numpy as np
import pytest

from ecgdenoise.noise import matern_covariance
from ecgdenoise.simulate import DEFAULT_PARAMS


@pytest.fixture(scope="session")
def base_params():
    return DEFAULT_PARAMS


@pytest.fixture(scope="session")
def small_k():
    """Matern covariance on a short window; shared across tests."""
    return matern_covariance(d=64, fs=500.0, lengthscale=0.02, smoothness=1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
