import numpy as np
import pytest

from helpers import dog_taxonomy, realm_taxonomy


@pytest.fixture
def dog_dag():
    return dog_taxonomy()


@pytest.fixture
def realm_dag():
    return realm_taxonomy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
