import numpy as np
import pytest

from heritcurves import fixtures


@pytest.fixture
def t2():
    return fixtures.twin_bmi()


@pytest.fixture
def t4():
    return fixtures.trio_birthweight()


@pytest.fixture
def f2():
    return fixtures.three_component_example()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
