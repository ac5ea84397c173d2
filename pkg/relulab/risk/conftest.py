"""
Pytest fixtures for exact risk tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
import numpy as np
import pytest

from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from risk.services import ExactRiskService


@pytest.fixture
def risk_service():
    return ExactRiskService()


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def identity_target(unit_domain):
    return Target.affine(1.0, 0.0, unit_domain)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def random_instance(rng):
    """Factory for a random (theta, affine target, domain) triple"""
    def make(H: int):
        a = rng.uniform(-2.0, 1.0)
        dom = DomainMeasure(a=a, b=a + rng.uniform(0.5, 3.0), rho=rng.uniform(0.5, 2.0))
        target = Target.affine(rng.normal(), rng.normal(), dom)
        theta = ParamVector.from_array(NetworkShape(d=1, H=H), rng.standard_normal(3 * H + 1))
        return theta, target, dom
    return make
