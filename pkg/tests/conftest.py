import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "srl",
    deadline=None,
    max_examples=20,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "srl"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
