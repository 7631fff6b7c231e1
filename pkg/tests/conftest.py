import numpy as np
import pytest

from maxlab.core import Eos


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def eos():
    return Eos(c0=1.0)
