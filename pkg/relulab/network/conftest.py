"""
Pytest fixtures for network tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
import numpy as np
import pytest

from network.models import DomainMeasure, NetworkShape, ParamVector


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def single_neuron():
    """Factory for H = 1, d = 1 parameters (w, b, v, c)"""
    def make(w: float, b: float, v: float, c: float) -> ParamVector:
        return ParamVector.from_parts([w], [b], [v], c)
    return make


@pytest.fixture
def random_theta(rng):
    """Factory for standard-normal parameters of a given shape"""
    def make(d: int = 1, H: int = 3) -> ParamVector:
        shape = NetworkShape(d=d, H=H)
        return ParamVector.from_array(shape, rng.standard_normal(shape.dim))
    return make
