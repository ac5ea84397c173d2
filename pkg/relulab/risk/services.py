"""
Closed-form risk and generalized gradient for d = 1, uniform density and a
piecewise-affine target.

On every segment of the refinement (realization kinks plus target knots) the
residual N - f is affine, so each integral is a polynomial of degree <= 2
integrated exactly. Writing x = m + u with m the segment midpoint and
|u| <= h keeps the odd moments out of the formulas:

    int (p u + e)^2 du      = 2h (e^2 + p^2 h^2 / 3)
    int (m + u)(p u + e) du = 2h (m e + p h^2 / 3)
"""
import logging
from typing import NamedTuple, Protocol

import numpy as np

from relulab import settings
from relulab.exceptions import DomainMismatchError
from network.models import ActivationConvention, DomainMeasure, ParamVector, Target
from network.services import active_mask, breakpoints, is_degenerate, parameter_norm, require_univariate
from risk.models import (
    FiniteDifferenceCheck,
    FiniteDifferenceVerdict,
    GradientBoundCheck,
    ResidualMoments,
    RiskReport,
)


logger = logging.getLogger(__name__)


# ========== Protocols (Abstractions) ==========

class RiskEvaluator(Protocol):
    """Anything that yields the risk and a generalized gradient"""

    def risk(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> float:
        ...

    def gradient(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> np.ndarray:
        ...

    def report(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> RiskReport:
        ...

    def residual_moments(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> ResidualMoments:
        ...


# ========== Segment decomposition ==========

class _Segments(NamedTuple):
    mid: np.ndarray          # (S,)
    half: np.ndarray         # (S,)
    res_slope: np.ndarray    # (S,) p
    res_mid: np.ndarray      # (S,) e = res(mid)
    target_slope: np.ndarray
    target_intercept: np.ndarray
    preact_mid: np.ndarray   # (S, H)
    active: np.ndarray       # (S, H) indicator used in the gradient


def refinement_edges(theta: ParamVector, target: Target, dom: DomainMeasure) -> np.ndarray:
    """a, b, the realization kinks and the target knots, sorted and merged."""
    kinks = breakpoints(theta, dom).kinks
    knots = [k for k in target.knots if dom.a < k < dom.b]
    edges = np.unique(np.array([dom.a, dom.b, *kinks, *knots]))
    keep = np.concatenate([[True], np.diff(edges) > settings.KINK_TOLERANCE])
    edges = edges[keep]
    edges[-1] = dom.b
    return edges


def _decompose(
    theta: ParamVector,
    target: Target,
    dom: DomainMeasure,
    convention: ActivationConvention,
) -> _Segments:
    require_univariate(theta, 'exact risk')
    if not target.covers(dom):
        raise DomainMismatchError(f'target covers [{target.lo}, {target.hi}], domain is [{dom.a}, {dom.b}]')

    edges = refinement_edges(theta, target, dom)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])

    w, b, v = theta.w[:, 0], theta.b, theta.v
    preact = np.outer(mid, w) + b
    on = active_mask(preact)

    net_slope = on @ (v * w)
    net_intercept = theta.c + on @ (v * b)
    alpha, beta = target.coefficients_at(mid)

    res_slope = net_slope - alpha
    res_mid = net_slope * mid + net_intercept - (alpha * mid + beta)
    active = on if convention is ActivationConvention.STRICT else active_mask(preact, convention)
    return _Segments(mid, half, res_slope, res_mid, alpha, beta, preact, active)


def _moments(seg: _Segments) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment int res and int x res."""
    zeroth = 2.0 * seg.half * seg.res_mid
    first = 2.0 * seg.half * (seg.mid * seg.res_mid + seg.res_slope * seg.half ** 2 / 3.0)
    return zeroth, first


def _risk(seg: _Segments, rho: float) -> float:
    squares = 2.0 * seg.half * (seg.res_mid ** 2 + seg.res_slope ** 2 * seg.half ** 2 / 3.0)
    return max(rho * float(squares.sum()), 0.0)


def _gradient(seg: _Segments, theta: ParamVector, rho: float) -> np.ndarray:
    w, v = theta.w[:, 0], theta.v
    zeroth, first = _moments(seg)
    active = seg.active.astype(float)

    grad_w = 2.0 * rho * v * (active.T @ first)
    grad_b = 2.0 * rho * v * (active.T @ zeroth)
    # int (w_i x + b_i)(p x + q) over the segment, i.e. 2h (g e + w p h^2 / 3) with g the preactivation at mid
    ramp = 2.0 * seg.half[:, None] * (
        seg.preact_mid * seg.res_mid[:, None] + np.outer(seg.res_slope * seg.half ** 2 / 3.0, w)
    )
    grad_v = 2.0 * rho * np.sum(active * ramp, axis=0)
    grad_c = 2.0 * rho * float(zeroth.sum())
    return np.concatenate([grad_w, grad_b, grad_v, [grad_c]])


# ========== Implementations ==========

class ExactRiskService:
    """Exact risk, generalized gradient and their diagnostics (d = 1)"""

    def __init__(self, convention: ActivationConvention = ActivationConvention.STRICT):
        self.convention = convention

    def risk(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> float:
        seg = _decompose(theta, target, dom, self.convention)
        return _risk(seg, dom.rho)

    def gradient(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
        convention: ActivationConvention | None = None,
    ) -> np.ndarray:
        seg = _decompose(theta, target, dom, convention or self.convention)
        return _gradient(seg, theta, dom.rho)

    def report(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> RiskReport:
        seg = _decompose(theta, target, dom, self.convention)
        grad = _gradient(seg, theta, dom.rho)
        return RiskReport(
            risk=_risk(seg, dom.rho),
            gradient=tuple(grad.tolist()),
            grad_norm=float(np.linalg.norm(grad)),
        )

    def residual_moments(self, theta: ParamVector, target: Target, dom: DomainMeasure) -> ResidualMoments:
        seg = _decompose(theta, target, dom, self.convention)
        zeroth, first = _moments(seg)
        against_target = seg.target_slope * first + seg.target_intercept * zeroth
        return ResidualMoments(
            zeroth=dom.rho * float(zeroth.sum()),
            first=dom.rho * float(first.sum()),
            target=dom.rho * float(against_target.sum()),
        )

    def finite_difference_gradient(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
        h: float = 1e-6,
    ) -> np.ndarray:
        """Central differences of the exact risk, one coordinate at a time."""
        if not h > 0:
            raise ValueError(f'finite-difference step must be positive, got {h}')
        base = theta.array
        result = np.empty(base.size)
        for k in range(base.size):
            step = np.zeros(base.size)
            step[k] = h
            plus = self.risk(ParamVector.from_array(theta.shape, base + step), target, dom)
            minus = self.risk(ParamVector.from_array(theta.shape, base - step), target, dom)
            result[k] = (plus - minus) / (2.0 * h)
        return result

    def finite_difference_check(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
        h: float = 1e-6,
    ) -> FiniteDifferenceCheck:
        """
        Compare the generalized gradient with central differences. Points where
        some neuron has w_i = b_i = 0 are reported as EXCLUDED instead of
        failing: the risk need not be differentiable there.
        """
        rep = self.report(theta, target, dom)
        grad = rep.gradient_array
        fd = self.finite_difference_gradient(theta, target, dom, h)
        deviation = float(np.linalg.norm(fd - grad))
        tolerance = max(1e-5, 1e-4 * rep.grad_norm)

        if is_degenerate(theta):
            verdict = FiniteDifferenceVerdict.EXCLUDED
            logger.debug(f"Finite-difference check excluded: degenerate neurons {sorted(is_degenerate(theta))}")
        elif deviation <= tolerance:
            verdict = FiniteDifferenceVerdict.AGREES
        else:
            verdict = FiniteDifferenceVerdict.DISAGREES
            logger.warning(f"Finite differences deviate by {deviation:.3e} (tolerance {tolerance:.3e})")

        return FiniteDifferenceCheck(
            verdict=verdict,
            deviation=deviation,
            tolerance=tolerance,
            finite_difference=tuple(fd.tolist()),
            gradient=rep.gradient,
        )

    def gradient_norm_bound_check(
        self,
        theta: ParamVector,
        target: Target,
        dom: DomainMeasure,
    ) -> GradientBoundCheck:
        rep = self.report(theta, target, dom)
        lhs = rep.grad_norm ** 2
        rhs = gradient_norm_bound(theta, rep.risk, dom)
        return GradientBoundCheck(lhs=lhs, rhs=rhs, ok=lhs <= rhs * (1.0 + 1e-12))


def gradient_norm_bound(theta: ParamVector, risk: float, dom: DomainMeasure) -> float:
    """4 L(theta) (A^2 (d+1) |theta|^2 + 1) mu([a, b]^d) with A = max{|a|, |b|, 1}."""
    d = theta.shape.d
    return 4.0 * risk * (dom.bound ** 2 * (d + 1) * parameter_norm(theta) ** 2 + 1.0) * dom.mass(d)
