"""
Checks of a recorded trajectory against the identities and bounds that
gradient-flow trajectories of the risk must satisfy.
"""
import logging
from typing import Literal, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from flow.models import (
    BoundednessCheck,
    ConditionalConvergenceCheck,
    ConditionalStatus,
    LimsupCheck,
    LyapunovCheck,
    Trajectory,
)
from network.services import parameter_norm
from theory.services import best_constant_risk, constant_fit_risk, small_risk_threshold


logger = logging.getLogger(__name__)


def _xi(traj: Trajectory, xi: Optional[float]) -> float:
    return traj.xi if xi is None else xi


def _lyapunov_series(traj: Trajectory, xi: float) -> np.ndarray:
    if xi == traj.xi:
        return traj.V
    c = traj.params[:, -1]
    return np.sum(traj.params ** 2, axis=1) + (c - 2.0 * xi) ** 2


def energy_residual(traj: Trajectory, quadrature: Literal['solver', 'trapezoid'] = 'solver') -> float:
    """
    max_t |L(t) - L(0) + int_0^t |G|^2 ds|. The integral is either the solver's
    own accumulator or the trapezoid rule on the accepted-step grid.
    """
    if quadrature == 'trapezoid':
        dissipated = cumulative_trapezoid(traj.grad_norm ** 2, traj.times, initial=0.0)
    else:
        dissipated = traj.dissipation
    return float(np.max(np.abs(traj.risk - traj.risk[0] + dissipated)))


def lyapunov_check(traj: Trajectory, xi: Optional[float] = None, slack: float = 1e-6) -> LyapunovCheck:
    """V(t) <= V(0) + 4 int_0^t (nu - L) ds with nu = rho int (f - xi)^2."""
    xi = _xi(traj, xi)
    V = _lyapunov_series(traj, xi)
    nu = constant_fit_risk(traj.target, traj.domain, xi)
    allowed = V[0] + 4.0 * (nu * traj.times - traj.risk_integral)
    violation = float(np.max(V - allowed))
    return LyapunovCheck(max_violation=violation, ok=violation <= slack * (1.0 + V[0]))


def lyapunov_identity_residual(traj: Trajectory, xi: Optional[float] = None) -> float:
    """
    Deviation from the exact balance
    V(t) = V(0) - 8 int_0^t L ds - 8 int_0^t rho int (f - xi)(N - f) ds.
    """
    xi = _xi(traj, xi)
    V = _lyapunov_series(traj, xi)
    predicted = V[0] - 8.0 * traj.risk_integral - 8.0 * traj.coupling_integral(xi)
    return float(np.max(np.abs(V - predicted)))


def boundedness_check(traj: Trajectory, xi: Optional[float] = None) -> BoundednessCheck:
    """|theta(t)| <= 3 |theta(0)|^2 + 8 xi^2 while L(t) stays at or above nu."""
    xi = _xi(traj, xi)
    norms = np.sqrt(np.sum(traj.params ** 2, axis=1))
    bound = 3.0 * parameter_norm(traj.initial) ** 2 + 8.0 * xi ** 2
    nu = constant_fit_risk(traj.target, traj.domain, xi)
    above = (traj.times > 0.0) & (traj.risk >= nu)
    worst = float(norms[above].max()) if np.any(above) else 0.0
    return BoundednessCheck(bound=bound, max_norm_while_above=worst, ok=worst <= bound * (1.0 + 1e-9))


def limsup_bound_check(traj: Trajectory, tol: float = 1e-8) -> LimsupCheck:
    """Terminal risk against the best constant fit; the risk never increases, so the last sample bounds the limit."""
    terminal = float(traj.risk[-1])
    const_bound = best_constant_risk(traj.target, traj.domain)
    return LimsupCheck(terminal_risk=terminal, const_bound=const_bound, ok=terminal <= const_bound + tol)


def conservation_drift(traj: Trajectory) -> np.ndarray:
    """Per neuron: max_t |W_i(t) - W_i(0)| / (1 + |W_i(0)|)."""
    W0 = traj.W[0]
    return np.max(np.abs(traj.W - W0), axis=0) / (1.0 + np.abs(W0))


def monotonicity_violation(traj: Trajectory) -> float:
    """Largest increase of the risk between consecutive samples (0 when none)."""
    if len(traj) < 2:
        return 0.0
    return max(float(np.max(np.diff(traj.risk))), 0.0)


def conditional_convergence_check(
    traj: Trajectory,
    alpha: Optional[float] = None,
    zero_tol: float = 1e-8,
) -> ConditionalConvergenceCheck:
    """
    Affine targets: a bounded run that starts below the smallest positive
    critical risk must end at zero risk.
    """
    initial, terminal = float(traj.risk[0]), float(traj.risk[-1])

    def not_applicable(reason: str, threshold: Optional[float] = None) -> ConditionalConvergenceCheck:
        return ConditionalConvergenceCheck(
            status=ConditionalStatus.NOT_APPLICABLE,
            threshold=threshold,
            initial_risk=initial,
            terminal_risk=terminal,
            reason=reason,
        )

    coefficients = traj.target.affine_coefficients()
    if coefficients is None and alpha is None:
        return not_applicable('target is not affine')
    alpha = coefficients[0] if alpha is None and coefficients is not None else alpha
    dom = traj.domain
    threshold = small_risk_threshold(traj.shape.H, float(alpha), dom.a, dom.b, dom.rho)
    if initial >= threshold:
        return not_applicable('initial risk is not below the smallest positive critical risk', threshold)
    if not boundedness_check(traj).ok:
        return not_applicable('trajectory is not bounded on the horizon', threshold)

    status = ConditionalStatus.PASS if terminal <= zero_tol else ConditionalStatus.FAIL
    if status is ConditionalStatus.FAIL:
        logger.warning(f"Run started below {threshold:.3e} but ended at risk {terminal:.3e}")
    return ConditionalConvergenceCheck(
        status=status,
        threshold=threshold,
        initial_risk=initial,
        terminal_risk=terminal,
    )
