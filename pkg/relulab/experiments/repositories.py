"""Repository pattern for run outputs: trajectory CSV, summary and sweep tables."""
import logging
from pathlib import Path
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeFloat

from flow.models import SolverStats, Trajectory
from experiments.checks import SETTLED_GRAD_NORM, CheckResult


logger = logging.getLogger(__name__)


TRAJECTORY_FILE = 'trajectory.csv'
SUMMARY_FILE = 'summary.txt'
SWEEP_FILE = 'sweep.tsv'

# Shortest decimal form that round-trips every 64-bit float
FLOAT_FORMAT = '%.17g'


# ========== Pydantic Models (Domain) ==========

class RunSummary(BaseModel):
    """What a single simulate run reports in summary.txt"""
    H: int
    seed: Optional[int] = None
    init: str
    t_end: float
    initial_risk: NonNegativeFloat
    terminal_risk: NonNegativeFloat
    # Ladder label, NONE between rungs, AMBIGUOUS, or n/a for non-affine targets
    rung: str
    checks: Tuple[CheckResult, ...] = ()
    stats: SolverStats
    terminal_grad_norm: Optional[NonNegativeFloat] = None
    # Boundedness verdict, recorded whether or not it is a configured check
    bounded: Optional[bool] = None

    model_config = ConfigDict(frozen=True)

    @property
    def settled(self) -> bool:
        """Bounded on the horizon and at a numerically critical point at t_end."""
        if self.terminal_grad_norm is None:
            return False
        return bool(self.bounded) and self.terminal_grad_norm < SETTLED_GRAD_NORM

    @property
    def off_ladder(self) -> bool:
        """Settled with a terminal risk on no rung of the critical-risk ladder."""
        return self.rung == 'NONE' and self.settled

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks) and not self.off_ladder

    def render(self) -> str:
        lines = [
            f'H: {self.H}',
            f'seed: {"-" if self.seed is None else self.seed}',
            f'init: {self.init}',
            f't_end: {self.t_end:.17g}',
            f'initial_risk: {self.initial_risk:.17g}',
            f'terminal_risk: {self.terminal_risk:.17g}',
            f'rung: {self.rung}',
        ]
        if self.terminal_grad_norm is not None:
            lines.append(f'terminal_grad_norm: {self.terminal_grad_norm:.6e}')
        if self.rung == 'NONE':
            lines.append(f'ladder: {"FAIL settled between rungs" if self.off_ladder else "not converged at horizon"}')
        lines.append(
            f'solver: accepted={self.stats.accepted} rejected={self.stats.rejected} '
            f'events={self.stats.events} bisections={self.stats.bisections}'
        )
        for check in self.checks:
            threshold = '-' if check.threshold is None else f'{check.threshold:.6e}'
            line = f'check {check.name.value}: {check.verdict} value={check.value:.6e} threshold={threshold}'
            lines.append(f'{line} ({check.detail})' if check.detail else line)
        lines.append(f'verdict: {"PASS" if self.passed else "FAIL"}')
        return '\n'.join(lines) + '\n'


class SweepRow(BaseModel):
    seed: int
    terminal_risk: float
    rung: str
    passed: bool
    # Failed checks and the ladder status of a NONE rung, or the error for runs that did not finish
    note: str = ''

    model_config = ConfigDict(frozen=True)


class TrajectoryTable(BaseModel):
    """A trajectory.csv read back: header columns and the numeric matrix"""
    columns: Tuple[str, ...]
    data: np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        """Columns named prefix_1, prefix_2, ... as a matrix."""
        idx = [k for k, name in enumerate(self.columns) if name.startswith(f'{prefix}_')]
        return self.data[:, idx]


def trajectory_columns(traj: Trajectory) -> Tuple[str, ...]:
    return (
        't',
        *(f'theta_{k}' for k in range(1, traj.shape.dim + 1)),
        'risk',
        'grad_norm',
        *(f'W_{i}' for i in range(1, traj.shape.H + 1)),
        'V',
    )


def trajectory_matrix(traj: Trajectory, stride: int = 1) -> np.ndarray:
    idx = traj.sample_indices(stride)
    return np.column_stack([
        traj.times[idx],
        traj.params[idx],
        traj.risk[idx],
        traj.grad_norm[idx],
        traj.W[idx],
        traj.V[idx],
    ])


# ========== Protocols (Abstractions) ==========

class TrajectoryRepository(Protocol):
    """Protocol for persisting run outputs"""

    def save_trajectory(self, traj: Trajectory, directory: Path, stride: int = 1) -> Path:
        ...

    def load_trajectory(self, path: Path) -> TrajectoryTable:
        ...

    def save_summary(self, summary: RunSummary, directory: Path) -> Path:
        ...

    def save_sweep(self, rows: Sequence[SweepRow], directory: Path) -> Path:
        ...


# ========== Implementations ==========

class CsvTrajectoryRepository:
    """Plain-text files under one directory per run"""

    def save_trajectory(self, traj: Trajectory, directory: Path, stride: int = 1) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / TRAJECTORY_FILE
        np.savetxt(
            path,
            trajectory_matrix(traj, stride),
            fmt=FLOAT_FORMAT,
            delimiter=',',
            header=','.join(trajectory_columns(traj)),
            comments='',
        )
        logger.info(f"Wrote {path}")
        return path

    def load_trajectory(self, path: Path) -> TrajectoryTable:
        with open(path) as handle:
            columns = tuple(handle.readline().strip().split(','))
        data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
        return TrajectoryTable(columns=columns, data=data)

    def save_summary(self, summary: RunSummary, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / SUMMARY_FILE
        path.write_text(summary.render())
        logger.info(f"Wrote {path}")
        return path

    def save_sweep(self, rows: Sequence[SweepRow], directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / SWEEP_FILE
        lines = ['seed\tterminal_risk\trung\tverdict\tnote']
        for row in rows:
            verdict = 'PASS' if row.passed else 'FAIL'
            lines.append(f'{row.seed}\t{row.terminal_risk:.17g}\t{row.rung}\t{verdict}\t{row.note}')
        path.write_text('\n'.join(lines) + '\n')
        logger.info(f"Wrote {path}")
        return path
