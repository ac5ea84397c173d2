"""
Pytest fixtures for Monte-Carlo estimator tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
import numpy as np
import pytest

from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from risk.services import ExactRiskService
from highdim.services import MonteCarloService


@pytest.fixture
def mc_service():
    return MonteCarloService(block_size=8192, workers=1)


@pytest.fixture
def exact_service():
    return ExactRiskService()


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def identity_target(unit_domain):
    return Target.affine(1.0, 0.0, unit_domain)


@pytest.fixture
def rng():
    return np.random.default_rng(5)


@pytest.fixture
def separated_theta(rng):
    """
    Factory for d = 1 parameters on [0, 1] whose kinks sit in [0.2, 0.8], so
    every active region has length at least 0.2
    """
    def make(H: int) -> ParamVector:
        kinks = rng.uniform(0.2, 0.8, size=H)
        w = rng.choice([-1.0, 1.0], size=H) * rng.uniform(0.5, 2.0, size=H)
        return ParamVector.from_parts(w, -w * kinks, rng.normal(size=H), rng.normal())
    return make


@pytest.fixture
def random_planar_theta(rng):
    """Factory for d = 2 parameters with standard normal entries"""
    def make(H: int) -> ParamVector:
        shape = NetworkShape(d=2, H=H)
        return ParamVector.from_array(shape, rng.standard_normal(shape.dim))
    return make
