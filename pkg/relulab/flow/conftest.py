"""
Pytest fixtures for gradient-flow tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
from typing import Callable

import numpy as np
import pytest

from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from network.services import balancedness_all, lyapunov
from risk.services import ExactRiskService
from flow.models import FlowConfig, Trajectory
from flow.services import GradientFlowService


@pytest.fixture
def unit_domain():
    return DomainMeasure(a=0.0, b=1.0, rho=1.0)


@pytest.fixture
def identity_target(unit_domain):
    return Target.affine(1.0, 0.0, unit_domain)


@pytest.fixture
def risk_service():
    return ExactRiskService()


@pytest.fixture
def flow_service(risk_service):
    return GradientFlowService(risk_evaluator=risk_service)


@pytest.fixture
def tight_config():
    return FlowConfig(t_end=100.0, dt_init=1e-3, dt_min=1e-14, dt_max=1.0, rk_tol=1e-12)


@pytest.fixture
def random_start():
    """Factory for i.i.d. normal(0, 1/sqrt(H)) starting parameters with a fixed seed"""
    def make(H: int, seed: int) -> ParamVector:
        rng = np.random.default_rng(seed)
        shape = NetworkShape(d=1, H=H)
        return ParamVector.from_array(shape, rng.normal(scale=1.0 / np.sqrt(H), size=shape.dim))
    return make


@pytest.fixture
def small_risk_start(risk_service, identity_target, unit_domain):
    """
    Factory for seeded width-one starts with risk below 1/12 - 0.01 against
    f(x) = x on [0, 1]. |v| > |w| keeps the settled input weight below 1,
    which sets how fast the kink runs out of the domain.
    """
    threshold = 1.0 / 12.0 - 0.01

    def make(seed: int) -> ParamVector:
        rng = np.random.default_rng(seed)
        for _ in range(1000):
            sign = rng.choice([-1.0, 1.0])
            w = sign * rng.uniform(0.5, 0.8)
            if sign > 0:
                kink, c = rng.uniform(0.05, 0.4), rng.uniform(0.0, 0.4)
            else:
                kink, c = rng.uniform(0.6, 0.95), rng.uniform(0.6, 1.0)
            theta = ParamVector.from_parts([w], [-w * kink], [sign * rng.uniform(1.3, 1.7)], c)
            if risk_service.risk(theta, identity_target, unit_domain) < threshold:
                return theta
        raise RuntimeError(f'no start below {threshold} for seed {seed}')
    return make


@pytest.fixture
def euler_oracle(risk_service) -> Callable[..., ParamVector]:
    """Fixed-step explicit Euler for theta' = -G(theta), the reference for the adaptive solver"""
    def run(theta0: ParamVector, target: Target, dom: DomainMeasure, t_end: float, dt: float) -> ParamVector:
        y = theta0.array.copy()
        for _ in range(int(round(t_end / dt))):
            y -= dt * risk_service.gradient(ParamVector.from_array(theta0.shape, y), target, dom)
        return ParamVector.from_array(theta0.shape, y)
    return run


@pytest.fixture
def hand_trajectory(identity_target, unit_domain):
    """
    Factory for a Trajectory built from given parameter samples and risks; the
    solver accumulators are filled by the trapezoid rule
    """
    def make(times, params, risk, grad_norm=None, xi=0.5) -> Trajectory:
        times = np.asarray(times, dtype=float)
        params = np.atleast_2d(np.asarray(params, dtype=float))
        risk = np.asarray(risk, dtype=float)
        grad_norm = np.zeros_like(risk) if grad_norm is None else np.asarray(grad_norm, dtype=float)
        H = (params.shape[1] - 1) // 3
        shape = NetworkShape(d=1, H=H)
        thetas = [ParamVector.from_array(shape, row) for row in params]
        steps = np.diff(times)
        running = np.concatenate([[0.0], np.cumsum(0.5 * steps * (risk[1:] + risk[:-1]))])
        dissipated = np.concatenate([[0.0], np.cumsum(0.5 * steps * (grad_norm[1:] ** 2 + grad_norm[:-1] ** 2))])
        return Trajectory(
            shape=shape,
            target=identity_target,
            domain=unit_domain,
            xi=xi,
            times=times,
            params=params,
            risk=risk,
            grad_norm=grad_norm,
            W=np.array([balancedness_all(theta) for theta in thetas]),
            V=np.array([lyapunov(theta, xi) for theta in thetas]),
            dissipation=dissipated,
            risk_integral=running,
            target_moment_integral=np.zeros_like(risk),
            residual_integral=np.zeros_like(risk),
        )
    return make


class ToySystem:
    """
    y' = slope_below for y < switch and slope_above beyond, with the
    signature sign(y - switch)
    """

    def __init__(self, switch: float = 0.35, slope_below: float = 1.0, slope_above: float = 2.0):
        self.switch = switch
        self.slope_below = slope_below
        self.slope_above = slope_above
        self.accepted: list[tuple[float, float]] = []
        self.crossings: list[float] = []

    def derivative(self, y: np.ndarray) -> np.ndarray:
        return np.array([self.slope_below if y[0] < self.switch else self.slope_above])

    def signature(self, y: np.ndarray) -> np.ndarray:
        return np.sign(y - self.switch)

    def accept(self, t: float, y: np.ndarray) -> np.ndarray:
        self.accepted.append((t, float(y[0])))
        return self.derivative(y)

    def crossed(self, t: float, changed: np.ndarray) -> None:
        self.crossings.append(t)


@pytest.fixture
def toy_system():
    return ToySystem()
