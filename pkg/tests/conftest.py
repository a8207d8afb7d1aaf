import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clusterbeam import SystemConfig, build_reduced, draw_unit_channels

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    max_examples=25,
)
settings.load_profile("default")


@pytest.fixture
def cfg_small():
    """Normalized two-cluster instance used throughout the unit tests."""
    return SystemConfig.homogeneous(C=2, L=8, K=2, N_r=2, d=2,
                                    P=10.0, sigma2=1.0, omega=1.0, seed=0)


@pytest.fixture
def ch_small(cfg_small):
    return draw_unit_channels(cfg_small, trial=0)


@pytest.fixture
def rp_small(cfg_small, ch_small):
    return build_reduced(ch_small, cfg_small)


@pytest.fixture
def cfg_sum_power():
    """Single-cluster instance where the sum-power baseline applies."""
    return SystemConfig.homogeneous(C=1, L=16, K=2, N_r=2, d=2,
                                    P=10.0, sigma2=1.0, omega=1.0, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
