"""Adaptive-quadrature evaluation of the risk and gradient integrals, used as an oracle."""
from typing import Callable

import numpy as np
from scipy.integrate import quad

from network.models import DomainMeasure, ParamVector, Target


class QuadratureRiskOracle:
    """
    Integrates the defining integrands of the risk and of the generalized
    gradient with scipy's adaptive quadrature, splitting at kinks and target
    knots. Independent of the segment bookkeeping in ExactRiskService.
    """

    def __init__(self, theta: ParamVector, target: Target, dom: DomainMeasure):
        self.dom = dom
        self.target = target
        self._w = theta.w[:, 0].tolist()
        self._b = theta.b.tolist()
        self._v = theta.v.tolist()
        self._c = theta.c
        self._dim = theta.shape.dim
        kinks = {-b / w for w, b in zip(self._w, self._b) if w != 0.0}
        knots = set(target.knots)
        self.points = sorted(p for p in kinks | knots if dom.a < p < dom.b)

    def _integrate(self, integrand: Callable[[float], float]) -> float:
        value, _ = quad(
            integrand,
            self.dom.a,
            self.dom.b,
            points=self.points or None,
            epsabs=1e-14,
            epsrel=1e-13,
            limit=500,
        )
        return self.dom.rho * value

    def residual(self, x: float) -> float:
        total = self._c
        for w, b, v in zip(self._w, self._b, self._v):
            pre = w * x + b
            if pre > 0.0:
                total += v * pre
        return total - float(self.target.evaluate(x))

    def risk(self) -> float:
        return self._integrate(lambda x: self.residual(x) ** 2)

    def gradient(self) -> np.ndarray:
        H = len(self._w)
        grad = np.empty(self._dim)
        for i, (w, b, v) in enumerate(zip(self._w, self._b, self._v)):
            def active_moment(x: float, w: float = w, b: float = b) -> float:
                return x * self.residual(x) if w * x + b > 0.0 else 0.0

            def active_residual(x: float, w: float = w, b: float = b) -> float:
                return self.residual(x) if w * x + b > 0.0 else 0.0

            def ramp_residual(x: float, w: float = w, b: float = b) -> float:
                return max(w * x + b, 0.0) * self.residual(x)

            grad[i] = 2.0 * v * self._integrate(active_moment)
            grad[H + i] = 2.0 * v * self._integrate(active_residual)
            grad[2 * H + i] = 2.0 * self._integrate(ramp_residual)
        grad[-1] = 2.0 * self._integrate(self.residual)
        return grad
