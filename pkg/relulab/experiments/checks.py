"""Named trajectory checks selectable from an experiment config."""
import logging
from typing import Callable, Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from flow.models import ConditionalStatus, Trajectory
from flow.monitors import (
    boundedness_check,
    conditional_convergence_check,
    conservation_drift,
    energy_residual,
    limsup_bound_check,
    lyapunov_check,
    monotonicity_violation,
)
from theory.services import uniform_error
from experiments.config import CheckName


logger = logging.getLogger(__name__)


CONSERVATION_TOL = 1e-8
ENERGY_TOL = 1e-6
MONOTONE_TOL = 1e-10
UNIFORM_TOL = 1e-3
# Terminal |G| below which a bounded run counts as settled at a critical point
SETTLED_GRAD_NORM = 1e-6


class CheckResult(BaseModel):
    """Outcome of one named check; `value` is compared against `threshold`"""
    name: CheckName
    value: float
    threshold: Optional[float] = None
    passed: bool
    detail: str = ''

    model_config = ConfigDict(frozen=True)

    @property
    def verdict(self) -> str:
        return 'PASS' if self.passed else 'FAIL'


def _energy(traj: Trajectory) -> CheckResult:
    residual = energy_residual(traj)
    threshold = ENERGY_TOL * (1.0 + float(traj.risk[0]))
    return CheckResult(name=CheckName.ENERGY, value=residual, threshold=threshold, passed=residual <= threshold)


def _lyapunov(traj: Trajectory) -> CheckResult:
    check = lyapunov_check(traj)
    return CheckResult(name=CheckName.LYAPUNOV, value=check.max_violation, passed=check.ok, detail=f'xi={traj.xi:.17g}')


def _boundedness(traj: Trajectory) -> CheckResult:
    check = boundedness_check(traj)
    return CheckResult(
        name=CheckName.BOUNDEDNESS, value=check.max_norm_while_above, threshold=check.bound, passed=check.ok,
    )


def _limsup(traj: Trajectory) -> CheckResult:
    check = limsup_bound_check(traj)
    return CheckResult(name=CheckName.LIMSUP, value=check.terminal_risk, threshold=check.const_bound, passed=check.ok)


def _conservation(traj: Trajectory) -> CheckResult:
    drift = float(np.max(conservation_drift(traj)))
    return CheckResult(name=CheckName.CONSERVATION, value=drift, threshold=CONSERVATION_TOL, passed=drift <= CONSERVATION_TOL)


def _monotone(traj: Trajectory) -> CheckResult:
    increase = monotonicity_violation(traj)
    threshold = MONOTONE_TOL * (1.0 + float(traj.risk[0]))
    return CheckResult(name=CheckName.MONOTONE, value=increase, threshold=threshold, passed=increase <= threshold)


def _conditional(traj: Trajectory) -> CheckResult:
    check = conditional_convergence_check(traj)
    return CheckResult(
        name=CheckName.CONDITIONAL,
        value=check.terminal_risk,
        threshold=check.threshold,
        passed=check.status is not ConditionalStatus.FAIL,
        detail=f'{check.status.value}: {check.reason}' if check.reason else check.status.value,
    )


def _uniform(traj: Trajectory) -> CheckResult:
    error = uniform_error(traj.final, traj.target, traj.domain)
    return CheckResult(name=CheckName.UNIFORM, value=error, threshold=UNIFORM_TOL, passed=error < UNIFORM_TOL)


CHECKS: dict[CheckName, Callable[[Trajectory], CheckResult]] = {
    CheckName.ENERGY: _energy,
    CheckName.LYAPUNOV: _lyapunov,
    CheckName.BOUNDEDNESS: _boundedness,
    CheckName.LIMSUP: _limsup,
    CheckName.CONSERVATION: _conservation,
    CheckName.MONOTONE: _monotone,
    CheckName.CONDITIONAL: _conditional,
    CheckName.UNIFORM: _uniform,
}


def run_checks(traj: Trajectory, names: Iterable[CheckName]) -> list[CheckResult]:
    results = [CHECKS[CheckName(name)](traj) for name in names]
    for result in results:
        if not result.passed:
            logger.warning(f"Check {result.name.value} failed: value {result.value:.6e}, threshold {result.threshold}")
    return results
