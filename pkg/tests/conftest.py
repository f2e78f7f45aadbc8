import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from optomech_witness.params import SystemParams

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# feasibility point of the opto-mechanical proposal
FEASIBILITY = dict(p=0.284, T=0.3, eta=0.1, n0=0.2)
FEASIBILITY_ALPHA = 2.63


@pytest.fixture
def feasibility_params():
    return SystemParams(**FEASIBILITY)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
