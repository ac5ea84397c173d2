"""
Runge-Kutta-Fehlberg 4(5) integration of an autonomous system whose right-hand
side is smooth except on surfaces where an integer signature of the state
changes.

The fifth-order solution is propagated and the embedded fourth-order one only
measures the local error. A trial step whose end state has a different
signature is never accepted as is: the step size is bisected down to the first
change, the solver steps to the last size without a change, then takes the
remaining sliver across the surface and reports the crossing.
"""
import logging
from typing import NamedTuple, Protocol

import numpy as np

from relulab.exceptions import NonFiniteStateError, SolverError, StepSizeUnderflowError
from flow.models import FlowConfig, SolverStats


logger = logging.getLogger(__name__)


# Fehlberg tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
# b5 - b4
_ERR = np.array([1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


# ========== Protocols (Abstractions) ==========

class PiecewiseSmoothSystem(Protocol):
    """y' = F(y) with F smooth wherever signature(y) is locally constant"""

    def derivative(self, y: np.ndarray) -> np.ndarray:
        ...

    def signature(self, y: np.ndarray) -> np.ndarray:
        ...

    def accept(self, t: float, y: np.ndarray) -> np.ndarray:
        """Record an accepted state and return F at it."""
        ...

    def crossed(self, t: float, changed: np.ndarray) -> None:
        """Called after a step that changed the signature entries flagged in `changed`."""
        ...


# ========== Implementations ==========

class _Trial(NamedTuple):
    y: np.ndarray
    error: float


class RungeKuttaFehlberg:
    """Adaptive RKF45 with location of signature changes"""

    def __init__(self, cfg: FlowConfig):
        self.cfg = cfg

    def _step(self, system: PiecewiseSmoothSystem, y: np.ndarray, k1: np.ndarray, h: float) -> _Trial:
        stages = [k1]
        for row in _A[1:]:
            increment = sum(coef * k for coef, k in zip(row, stages))
            stages.append(system.derivative(y + h * increment))
        k = np.array(stages)
        y_new = y + h * (_B5 @ k)
        scale = self.cfg.rk_tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
        error = float(np.sqrt(np.mean((h * (_ERR @ k) / scale) ** 2)))
        return _Trial(y_new, error)

    def _factor(self, error: float) -> float:
        if error == 0.0:
            return _MAX_FACTOR
        return float(np.clip(_SAFETY * error ** -0.2, _MIN_FACTOR, _MAX_FACTOR))

    def _locate(
        self,
        system: PiecewiseSmoothSystem,
        t: float,
        y: np.ndarray,
        k1: np.ndarray,
        h: float,
        sig: np.ndarray,
        stats: SolverStats,
    ) -> tuple[float, float]:
        """Bracket (lo, hi) of step sizes: no change at lo, a change at hi."""
        lo, hi = 0.0, h
        width = self.cfg.event_tol * max(1.0, abs(t))
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            stats.bisections += 1
            if np.array_equal(system.signature(self._step(system, y, k1, mid).y), sig):
                lo = mid
            else:
                hi = mid
        return lo, hi

    def solve(self, system: PiecewiseSmoothSystem, y0: np.ndarray) -> SolverStats:
        cfg = self.cfg
        stats = SolverStats()
        t = 0.0
        y = np.array(y0, dtype=float)
        if not np.all(np.isfinite(y)):
            raise NonFiniteStateError(t, y)
        k1 = system.accept(t, y)
        sig = system.signature(y)
        h = cfg.dt_init

        while t < cfg.t_end:
            if stats.accepted + stats.rejected >= cfg.max_steps:
                raise SolverError(f'step budget of {cfg.max_steps} exhausted at t={t:.6g}', t, y)
            last = t + h >= cfg.t_end
            step = cfg.t_end - t if last else h

            trial = self._step(system, y, k1, step)
            if not np.all(np.isfinite(trial.y)) or not np.isfinite(trial.error):
                raise NonFiniteStateError(t, y)

            new_sig = system.signature(trial.y)
            if not np.array_equal(new_sig, sig):
                lo, hi = self._locate(system, t, y, k1, step, sig, stats)
                if lo > 0.0:
                    before = self._step(system, y, k1, lo)
                    if before.error > 1.0:
                        stats.rejected += 1
                        h = self._shrink(lo * self._factor(before.error), t, y)
                        continue
                    t, y = t + lo, before.y
                    k1 = system.accept(t, y)
                    stats.accepted += 1
                # Sliver across the discontinuity surface
                across = self._step(system, y, k1, hi - lo)
                t = cfg.t_end if last and hi == step else t + (hi - lo)
                y = across.y
                k1 = system.accept(t, y)
                stats.accepted += 1
                crossed_sig = system.signature(y)
                changed = crossed_sig != sig
                if np.any(changed):
                    stats.events += 1
                    system.crossed(t, changed)
                sig = crossed_sig
                continue

            if trial.error <= 1.0:
                t = cfg.t_end if last else t + step
                y = trial.y
                k1 = system.accept(t, y)
                stats.accepted += 1
                h = min(cfg.dt_max, step * self._factor(trial.error))
            else:
                stats.rejected += 1
                h = self._shrink(step * min(self._factor(trial.error), 1.0), t, y)

        logger.debug(
            f"Solver finished at t={t:.6g}: {stats.accepted} accepted, {stats.rejected} rejected, "
            f"{stats.events} events, {stats.bisections} bisection steps"
        )
        return stats

    def _shrink(self, h: float, t: float, y: np.ndarray) -> float:
        if h < self.cfg.dt_min:
            raise StepSizeUnderflowError(t, h, self.cfg.dt_min, y)
        return h
