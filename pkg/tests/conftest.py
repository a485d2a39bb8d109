import numpy as np
import pytest

from c1lab import metrics
from c1lab.surfaces import flat_slice, round_sphere


@pytest.fixture
def mink():
    return metrics.minkowski()


@pytest.fixture
def schw():
    return metrics.schwarzschild()


@pytest.fixture
def pg():
    return metrics.painleve_gullstrand(r_excise=0.3)


@pytest.fixture
def slice0():
    return flat_slice(3, 0.0)


@pytest.fixture
def sphere2():
    return round_sphere(2.0, [0.0, 0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
