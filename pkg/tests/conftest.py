import numpy as np
import pytest

from sobolev_forge.targets import get_target


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sinprod2():
    return get_target("sinprod", alpha=2, dim=2)


@pytest.fixture(scope="session")
def polyxy3():
    return get_target("poly-xy", alpha=3, dim=2)
