import numpy as np
import pytest

from nestedpd.problems import make_instance


@pytest.fixture(scope="session")
def tv():
    return make_instance("tv-1d")


@pytest.fixture(scope="session")
def fused():
    return make_instance("fused-lasso")


@pytest.fixture(scope="session")
def sc():
    return make_instance("strongly-convex")


@pytest.fixture(scope="session")
def shipped(tv, fused, sc):
    return {"tv-1d": tv, "fused-lasso": fused, "strongly-convex": sc}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
