import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fogdetect.synthcohort import CohortSpec, generate_subject

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_spec():
    return CohortSpec(n_subjects=3, minutes_per_state=3.0)


@pytest.fixture(scope="session")
def small_recording(small_spec):
    return generate_subject(small_spec, 0, "OFF")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
