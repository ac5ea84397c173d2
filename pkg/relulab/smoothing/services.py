"""
Smoothed risks L_r obtained by replacing max{x, 0} with the C^1 ramp of index
r, and their true gradients. Between consecutive edges (domain ends, target
knots and the preimages of both window ends for every neuron) the integrand
is a polynomial, so every piece is integrated by Gauss-Legendre rules.
"""
import logging
from typing import Sequence

import numpy as np

from relulab import settings
from relulab.exceptions import DomainMismatchError
from network.models import DomainMeasure, ParamVector, Target
from network.services import require_univariate
from risk.services import RiskEvaluator
from smoothing.models import GradientLimitError, SmoothActivation
from smoothing.quadrature import adaptive_gauss_legendre


logger = logging.getLogger(__name__)


def smoothed_value(act: SmoothActivation, x: np.ndarray | float) -> np.ndarray | float:
    return act.value(x)


def smoothed_deriv(act: SmoothActivation, x: np.ndarray | float) -> np.ndarray | float:
    return act.deriv(x)


def smoothing_edges(theta: ParamVector, target: Target, dom: DomainMeasure, act: SmoothActivation) -> np.ndarray:
    """a, b, target knots and every x with w_i x + b_i at either end of the window."""
    w, b = theta.w[:, 0], theta.b
    lo, hi = act.window
    moving = w != 0.0
    preimages = np.concatenate([(lo - b[moving]) / w[moving], (hi - b[moving]) / w[moving]])
    inside = [x for x in (*preimages, *target.knots) if dom.a < x < dom.b]
    edges = np.unique(np.array([dom.a, dom.b, *inside]))
    keep = np.concatenate([[True], np.diff(edges) > settings.KINK_TOLERANCE])
    edges = edges[keep]
    edges[-1] = dom.b
    return edges


class SmoothedRiskService:
    """Smoothed risk, its gradient, and their distance from the exact objects"""

    def __init__(self, exact_risk: RiskEvaluator, abs_tol: float = 1e-13, rel_tol: float = 1e-13):
        self.exact_risk = exact_risk
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol

    def _integrate(self, theta: ParamVector, target: Target, dom: DomainMeasure, r: int) -> np.ndarray:
        """rho * integral of [res^2, dL_r/dtheta / rho] with res = N_r - f."""
        require_univariate(theta, 'smoothed risk')
        if not target.covers(dom):
            raise DomainMismatchError(f'target covers [{target.lo}, {target.hi}], domain is [{dom.a}, {dom.b}]')

        act = SmoothActivation(r=r)
        w, b, v = theta.w[:, 0], theta.b, theta.v

        def integrand(x: np.ndarray) -> np.ndarray:
            preact = np.outer(x, w) + b
            ramp = act.value(preact)
            slope = act.deriv(preact)
            res = theta.c + ramp @ v - target.evaluate(x)
            weighted = 2.0 * res[:, None]
            return np.column_stack([
                res ** 2,
                weighted * v * slope * x[:, None],
                weighted * v * slope,
                weighted * ramp,
                weighted[:, 0],
            ])

        edges = smoothing_edges(theta, target, dom, act)
        total = np.zeros(theta.shape.dim + 1)
        for left, right in zip(edges[:-1], edges[1:]):
            total += adaptive_gauss_legendre(integrand, left, right, self.abs_tol, self.rel_tol)
        return dom.rho * total

    def smoothed_risk(self, theta: ParamVector, target: Target, dom: DomainMeasure, r: int) -> float:
        return max(float(self._integrate(theta, target, dom, r)[0]), 0.0)

    def smoothed_gradient(self, theta: ParamVector, target: Target, dom: DomainMeasure, r: int) -> np.ndarray:
        return self._integrate(theta, target, dom, r)[1:]

    def finite_difference_gradient(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
        r: int,
        h: float = 1e-6,
    ) -> np.ndarray:
        if not h > 0:
            raise ValueError(f'finite-difference step must be positive, got {h}')
        base = theta.array
        result = np.empty(base.size)
        for k in range(base.size):
            step = np.zeros(base.size)
            step[k] = h
            plus = self.smoothed_risk(ParamVector.from_array(theta.shape, base + step), target, dom, r)
            minus = self.smoothed_risk(ParamVector.from_array(theta.shape, base - step), target, dom, r)
            result[k] = (plus - minus) / (2.0 * h)
        return result

    def gradient_limit_errors(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
        rs: Sequence[int] = (10, 100, 1000, 10000),
    ) -> list[GradientLimitError]:
        """|L_r - L| and |grad L_r - G| for every r in rs, in the given order."""
        exact = self.exact_risk.report(theta, target, dom)
        errors = []
        for r in rs:
            values = self._integrate(theta, target, dom, r)
            errors.append(GradientLimitError(
                r=r,
                risk_error=abs(max(float(values[0]), 0.0) - exact.risk),
                gradient_error=float(np.linalg.norm(values[1:] - exact.gradient_array)),
            ))
        logger.debug(f"Smoothing errors: {[(e.r, e.risk_error, e.gradient_error) for e in errors]}")
        return errors
