import numpy as np
import pytest

from mcouple import from_atoms


@pytest.fixture
def pair_a():
    return from_atoms([(-1, 0.5), (1, 0.5)]), from_atoms([(-2, 0.5), (2, 0.5)])


@pytest.fixture
def pair_b():
    return from_atoms([(-1, 0.5), (1, 0.5)]), from_atoms([(-8, 0.125), (-6, 0.25), (4, 0.625)])


@pytest.fixture
def pair_d():
    # decreasing convex order only: the target has the smaller mean
    return from_atoms([(0, 1.0)]), from_atoms([(-2, 0.5), (1, 0.5)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
