import numpy as np
import pytest

from src.constants import DEFAULT_SEED
from src.sampling import RngStream
from src.spectra import new_spectrum


@pytest.fixture
def three_mode_spectrum():
    return new_spectrum([1.0, 0.7, 0.2])


@pytest.fixture
def verify_spectra():
    return [new_spectrum([0.9]), new_spectrum([1.0, 0.5]), new_spectrum([1.0, 0.7, 0.2])]


@pytest.fixture
def rng():
    return RngStream(DEFAULT_SEED)


@pytest.fixture
def np_rng():
    return np.random.default_rng(DEFAULT_SEED)


@pytest.fixture
def random_spectra(np_rng):
    """Factory of spectra with a given range for the top singular value."""

    def make(count, low, high):
        spectra = []
        for _ in range(count):
            r = int(np_rng.integers(1, 5))
            top = float(np_rng.uniform(low, high))
            rest = np_rng.uniform(0.05, 1.0, r - 1) * top
            spectra.append(new_spectrum([top, *rest]))
        return spectra

    return make
