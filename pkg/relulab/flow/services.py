import logging
from typing import Optional

import numpy as np

from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from network.services import require_univariate
from risk.services import RiskEvaluator
from flow.models import FlowConfig, KinkEvent, Trajectory
from flow.solver import RungeKuttaFehlberg
from theory.services import mean_target


logger = logging.getLogger(__name__)


# Accumulators appended to the parameters: |G|^2, L, rho int f res, rho int res
_ACCUMULATORS = 4


class _FlowSystem:
    """
    Gradient flow as a piecewise-smooth system for the solver. The state is
    theta followed by the running integrals of the monitored quantities; the
    signature holds the signs of w_i x + b_i at a, b and every target knot.
    """

    def __init__(
        self,
        evaluator: RiskEvaluator,
        shape: NetworkShape,
        target: Target,
        dom: DomainMeasure,
    ):
        self.evaluator = evaluator
        self.shape = shape
        self.target = target
        self.dom = dom
        self.points = np.array([dom.a, *(k for k in target.knots if dom.a < k < dom.b), dom.b])
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.risks: list[float] = []
        self.grad_norms: list[float] = []
        self.events: list[KinkEvent] = []

    def _evaluate(self, y: np.ndarray) -> tuple[float, float, np.ndarray]:
        theta = ParamVector.from_array(self.shape, y[:self.shape.dim])
        report = self.evaluator.report(theta, self.target, self.dom)
        moments = self.evaluator.residual_moments(theta, self.target, self.dom)
        deriv = np.concatenate([
            -report.gradient_array,
            [report.grad_norm ** 2, report.risk, moments.target, moments.zeroth],
        ])
        return report.risk, report.grad_norm, deriv

    def derivative(self, y: np.ndarray) -> np.ndarray:
        return self._evaluate(y)[2]

    def signature(self, y: np.ndarray) -> np.ndarray:
        H = self.shape.H
        w = y[:H]
        b = y[H:2 * H]
        return np.sign(np.outer(w, self.points) + b[:, None])

    def accept(self, t: float, y: np.ndarray) -> np.ndarray:
        risk, grad_norm, deriv = self._evaluate(y)
        self.times.append(t)
        self.states.append(y.copy())
        self.risks.append(risk)
        self.grad_norms.append(grad_norm)
        return deriv

    def crossed(self, t: float, changed: np.ndarray) -> None:
        neurons = tuple((np.flatnonzero(changed.any(axis=1)) + 1).tolist())
        self.events.append(KinkEvent(t=t, neurons=neurons))
        logger.debug(f"Activation pattern change at t={t:.12g} for neurons {neurons}")


class GradientFlowService:
    """Integrates theta' = -G(theta) and records the monitored quantities"""

    def __init__(self, risk_evaluator: RiskEvaluator):
        self.risk_evaluator = risk_evaluator

    def vector_field(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> np.ndarray:
        require_univariate(theta, 'vector_field')
        return -self.risk_evaluator.gradient(theta, target, dom)

    def integrate(
        self,
        theta0: ParamVector,
        target: Target,
        dom: DomainMeasure,
        cfg: FlowConfig,
        xi: Optional[float] = None,
    ) -> Trajectory:
        require_univariate(theta0, 'integrate')
        xi = mean_target(target, dom) if xi is None else xi
        shape = theta0.shape

        system = _FlowSystem(self.risk_evaluator, shape, target, dom)
        y0 = np.concatenate([theta0.array, np.zeros(_ACCUMULATORS)])
        stats = RungeKuttaFehlberg(cfg).solve(system, y0)

        states = np.array(system.states)
        params = states[:, :shape.dim]
        H = shape.H
        w, b, v, c = params[:, :H], params[:, H:2 * H], params[:, 2 * H:3 * H], params[:, -1]
        norm_squared = np.sum(params[:, :-1] ** 2, axis=1) + c ** 2

        trajectory = Trajectory(
            shape=shape,
            target=target,
            domain=dom,
            xi=xi,
            times=np.array(system.times),
            params=params,
            risk=np.array(system.risks),
            grad_norm=np.array(system.grad_norms),
            W=w ** 2 + b ** 2 - v ** 2,
            V=norm_squared + (c - 2.0 * xi) ** 2,
            dissipation=states[:, shape.dim],
            risk_integral=states[:, shape.dim + 1],
            target_moment_integral=states[:, shape.dim + 2],
            residual_integral=states[:, shape.dim + 3],
            events=tuple(system.events),
            stats=stats,
        )
        logger.info(
            f"Integrated H={H} to t={cfg.t_end:g}: risk {trajectory.risk[0]:.6e} -> {trajectory.risk[-1]:.6e}, "
            f"{stats.accepted} steps, {stats.rejected} rejected, {stats.events} pattern changes"
        )
        return trajectory
