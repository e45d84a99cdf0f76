import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twistrot.maps import integrable, standard_map

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def std05():
    return standard_map(0.5)


@pytest.fixture(scope="session")
def std2():
    return standard_map(2.0)


@pytest.fixture(scope="session")
def flat():
    return integrable(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
