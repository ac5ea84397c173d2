"""Closed-form quantities: constant fits, the critical-risk ladder and small-risk structure."""
import logging
from typing import Optional

import numpy as np

from relulab.exceptions import AmbiguousClassificationError, DomainMismatchError, ShapeError
from network.models import DomainMeasure, ParamVector, Target
from network.services import realization, require_univariate
from risk.services import RiskEvaluator, refinement_edges
from theory.models import DiagnosticStatus, RiskLadder, Rung, SmallRiskReport


logger = logging.getLogger(__name__)


# ========== Constant fits ==========

def _require_cover(target: Target, dom: DomainMeasure) -> None:
    if not target.covers(dom):
        raise DomainMismatchError(f'target covers [{target.lo}, {target.hi}], domain is [{dom.a}, {dom.b}]')


def mean_target(target: Target, dom: DomainMeasure) -> float:
    """Average of f over [a, b]; the default xi of the Lyapunov monitors."""
    _require_cover(target, dom)
    total = sum(
        (piece.x_hi - piece.x_lo) * piece.value(0.5 * (piece.x_lo + piece.x_hi))
        for piece in target.pieces
    )
    return total / dom.length


def constant_fit_risk(target: Target, dom: DomainMeasure, xi: float) -> float:
    """rho int (f - xi)^2, exact on every affine piece."""
    _require_cover(target, dom)
    total = 0.0
    for piece in target.pieces:
        half = 0.5 * (piece.x_hi - piece.x_lo)
        offset = piece.value(piece.x_lo + half) - xi
        total += 2.0 * half * (offset ** 2 + piece.slope ** 2 * half ** 2 / 3.0)
    return dom.rho * total


def best_constant_risk(target: Target, dom: DomainMeasure) -> float:
    return constant_fit_risk(target, dom, mean_target(target, dom))


# ========== Critical-risk ladder ==========

def ladder_value(n: int, alpha: float, a: float, b: float, rho: float) -> float:
    return rho * alpha ** 2 * (b - a) ** 3 / (12.0 * (n + 1) ** 4)


def critical_ladder(H: int, alpha: float, a: float, b: float, rho: float = 1.0) -> RiskLadder:
    if not b > a:
        raise ValueError(f'need b > a, got a={a}, b={b}')
    rungs = []
    if alpha != 0.0:
        rungs = [Rung(n=n, value=ladder_value(n, alpha, a, b, rho)) for n in range(0, 2 * (H // 2) + 1, 2)]
    rungs.append(Rung(n=None, value=0.0))
    return RiskLadder(rungs=tuple(rungs), H=H, alpha=alpha, a=a, b=b, rho=rho)


def small_risk_threshold(H: int, alpha: float, a: float, b: float, rho: float = 1.0) -> float:
    """The smallest positive rung; below it the flow can only converge to zero risk."""
    return ladder_value(2 * (H // 2), alpha, a, b, rho)


def default_tolerance(ladder: RiskLadder) -> float:
    gap = ladder.min_gap
    return 1e-6 if gap is None else min(1e-6, gap / 4.0)


def classify_terminal_risk(value: float, ladder: RiskLadder, tol: Optional[float] = None) -> Optional[Rung]:
    """The unique rung within tol of value, or None when value sits between rungs."""
    tol = default_tolerance(ladder) if tol is None else tol
    if not tol > 0:
        raise ValueError(f'classification tolerance must be positive, got {tol}')
    gap = ladder.min_gap
    if gap is not None and tol > gap / 2.0:
        raise AmbiguousClassificationError(f'tolerance {tol:.3e} exceeds half the smallest rung gap {gap:.3e}')

    matches = [rung for rung in ladder.rungs if abs(value - rung.value) <= tol]
    if len(matches) > 1:
        raise AmbiguousClassificationError(f'{value!r} lies within {tol:.3e} of rungs {[r.label for r in matches]}')
    return matches[0] if matches else None


# ========== Affine residuals ==========

def affine_moment_solve(zeroth: float, first: float, a: float, b: float) -> tuple[float, float]:
    """
    (slope, intercept) of the affine res on [a, b] with int res = zeroth and
    int x res = first. The moment matrix of {1, x} is nonsingular for b > a, so
    vanishing moments force res = 0.
    """
    if not b > a:
        raise ValueError(f'need b > a, got a={a}, b={b}')
    m1 = b - a
    mx = (b ** 2 - a ** 2) / 2.0
    mxx = (b ** 3 - a ** 3) / 3.0
    intercept, slope = np.linalg.solve(np.array([[m1, mx], [mx, mxx]]), np.array([zeroth, first]))
    return float(slope), float(intercept)


def uniform_error(theta: ParamVector, target: Target, dom: DomainMeasure) -> float:
    """sup over [a, b] of |N - f|; both are piecewise affine, so edges suffice."""
    require_univariate(theta, 'uniform_error')
    _require_cover(target, dom)
    edges = refinement_edges(theta, target, dom)
    return float(np.max(np.abs(realization(theta, edges) - target.evaluate(edges))))


# ========== Services ==========

class TheoryService:
    """Diagnostics that need the exact risk"""

    def __init__(self, risk_evaluator: RiskEvaluator):
        self.risk_evaluator = risk_evaluator

    def is_critical(self, theta: ParamVector, target: Target, dom: DomainMeasure, tol: float = 1e-8) -> bool:
        return self.risk_evaluator.report(theta, target, dom).grad_norm <= tol

    def small_risk_diagnostics(
        self,
        theta: ParamVector,
        alpha: float,
        beta: float,
        dom: DomainMeasure,
    ) -> SmallRiskReport:
        """
        For H = 1 and f(x) = alpha x + beta: below the constant-fit risk the
        network must be increasing where f is (alpha w v > 0), the neuron must
        be active somewhere on [a, b], and |w v| is bounded below.
        """
        if theta.shape.H != 1:
            raise ShapeError(f'small-risk diagnostics need H = 1, got H = {theta.shape.H}')
        require_univariate(theta, 'small_risk_diagnostics')

        target = Target.affine(alpha, beta, dom)
        risk = self.risk_evaluator.risk(theta, target, dom)
        threshold = ladder_value(0, alpha, dom.a, dom.b, dom.rho)
        const_risk = best_constant_risk(target, dom)
        w, b, v = theta.w_at(1), theta.b_at(1), theta.v_at(1)
        slope_product = abs(w * v)

        sign = DiagnosticStatus.NOT_APPLICABLE
        if risk < threshold:
            sign = DiagnosticStatus.OK if alpha * w * v > 0.0 else DiagnosticStatus.VIOLATED

        active = DiagnosticStatus.NOT_APPLICABLE
        lower_bound = None
        slope = DiagnosticStatus.NOT_APPLICABLE
        if risk < const_risk:
            active = DiagnosticStatus.OK if max(w * dom.a + b, w * dom.b + b) > 0.0 else DiagnosticStatus.VIOLATED
            lower_bound = (np.sqrt(const_risk) - np.sqrt(risk)) / np.sqrt(dom.rho * dom.length ** 3)
            slope = DiagnosticStatus.OK if slope_product >= lower_bound * (1.0 - 1e-12) else DiagnosticStatus.VIOLATED

        report = SmallRiskReport(
            risk=risk,
            threshold=threshold,
            const_risk=const_risk,
            sign=sign,
            active=active,
            slope_product=slope_product,
            slope_lower_bound=None if lower_bound is None else float(lower_bound),
            slope=slope,
        )
        if report.violations:
            logger.warning(f"Small-risk structure violated ({', '.join(report.violations)}) at theta={theta.values}")
        return report
