import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def constants():
    from nvtheta import Constants

    return Constants()


@pytest.fixture(scope="session")
def rounded_constants():
    """Constants with b_zfs fixed at exactly 102.5 mT, the reference values' convention."""
    from nvtheta import Constants

    return Constants.from_b_zfs(102.5)
