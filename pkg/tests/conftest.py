import warnings

import pytest
from hypothesis import HealthCheck, settings

from abelcycles.model import ResolutionWarning

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_resolution_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        yield
