"""
Pytest fixtures for smoothing tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
from unittest.mock import create_autospec

import numpy as np
import pytest

from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from risk.services import ExactRiskService, RiskEvaluator
from smoothing.services import SmoothedRiskService


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def identity_target(unit_domain):
    return Target.affine(1.0, 0.0, unit_domain)


@pytest.fixture
def exact_service():
    return ExactRiskService()


@pytest.fixture
def smoothed_service(exact_service):
    return SmoothedRiskService(exact_risk=exact_service)


@pytest.fixture
def mock_risk_evaluator():
    return create_autospec(RiskEvaluator, instance=True)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


@pytest.fixture
def random_theta(rng):
    """Factory for parameters with every |w_i| in [0.1, 2] on the unit domain"""
    def make(H: int) -> ParamVector:
        w = rng.choice([-1.0, 1.0], size=H) * rng.uniform(0.1, 2.0, size=H)
        b = rng.normal(size=H)
        v = rng.normal(size=H)
        return ParamVector.from_parts(w, b, v, rng.normal())
    return make


@pytest.fixture
def well_separated_theta(rng):
    """
    Factory for parameters whose kinks sit in [0.25, 0.75] and whose slopes
    satisfy |w_i| >= 0.5, so each smoothing window stays inside the domain
    """
    def make(H: int) -> ParamVector:
        w = rng.choice([-1.0, 1.0], size=H) * rng.uniform(0.5, 2.0, size=H)
        kinks = rng.uniform(0.25, 0.75, size=H)
        v = rng.normal(size=H)
        return ParamVector.from_parts(w, -w * kinks, v, rng.normal())
    return make


@pytest.fixture
def shape_one():
    return NetworkShape(d=1, H=1)
