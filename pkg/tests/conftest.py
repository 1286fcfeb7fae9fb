import numpy as np
import pytest
from hypothesis import settings

from cimnas.data import synth_dataset
from cimnas.devices import default_library

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def toy_data():
    return synth_dataset(4, 400, (1, 8, 8), separation=10.0, seed=0, pixel_scale=0.25, background=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
