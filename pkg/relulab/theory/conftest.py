"""
Pytest fixtures for theory tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
from unittest.mock import create_autospec

import numpy as np
import pytest

from network.models import DomainMeasure, Target
from risk.services import ExactRiskService, RiskEvaluator
from theory.services import TheoryService, critical_ladder


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def identity_target(unit_domain):
    return Target.affine(1.0, 0.0, unit_domain)


@pytest.fixture
def theory_service():
    return TheoryService(risk_evaluator=ExactRiskService())


@pytest.fixture
def mock_risk_evaluator():
    return create_autospec(RiskEvaluator, instance=True)


@pytest.fixture
def ladder_h2():
    return critical_ladder(2, 1.0, 0.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(3)
