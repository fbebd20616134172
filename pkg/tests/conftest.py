import numpy as np
import pytest

from kinepose import default_h36m_tree


@pytest.fixture(scope="session")
def tree():
    return default_h36m_tree()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
