import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

A_COEFFS = (-0.7655, 0.03624)
B_COEFFS = (0.04074, 0.3601)


@pytest.fixture
def plant():
    from softgrip.rig import NOMINAL_ARX

    return NOMINAL_ARX


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
