import numpy as np
import pytest

from plasmafbp import Mesh, make_spec, tanh_nonlinearity


@pytest.fixture(scope="session")
def line400():
    return Mesh.interval(1.0, 400)


@pytest.fixture(scope="session")
def line100():
    return Mesh.interval(1.0, 100)


@pytest.fixture(scope="session")
def square16():
    return Mesh.rectangle(1.0, 1.0, 16, 16)


@pytest.fixture(scope="session")
def tanh_spec(line400):
    return make_spec(line400, tanh_nonlinearity())


@pytest.fixture(scope="session")
def tanh_cos_spec(line400):
    return make_spec(line400, tanh_nonlinearity(), theta="0.1*cos(pi*x)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
