import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relau.synth import SynthConfig, generate

settings.register_profile("relau", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("relau")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cfg():
    return SynthConfig(seed=3, n_subjects=3, frames=24, aus=(4, 12))


@pytest.fixture(scope="session")
def small_corpus(small_cfg):
    return generate(small_cfg)
