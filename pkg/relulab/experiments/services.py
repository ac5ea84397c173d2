import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from relulab.exceptions import AmbiguousClassificationError, SolverError
from flow.models import Trajectory
from flow.monitors import boundedness_check
from flow.services import GradientFlowService
from theory.services import classify_terminal_risk, critical_ladder
from experiments.checks import run_checks
from experiments.config import ExperimentConfig
from experiments.repositories import RunSummary, SweepRow, TrajectoryRepository


logger = logging.getLogger(__name__)


def terminal_rung(traj: Trajectory) -> str:
    """Ladder label of the terminal risk; n/a when the target is not affine."""
    coefficients = traj.target.affine_coefficients()
    if coefficients is None:
        return 'n/a'
    dom = traj.domain
    ladder = critical_ladder(traj.shape.H, coefficients[0], dom.a, dom.b, dom.rho)
    try:
        rung = classify_terminal_risk(float(traj.risk[-1]), ladder)
    except AmbiguousClassificationError:
        return 'AMBIGUOUS'
    return 'NONE' if rung is None else rung.label


class ExperimentService:
    """Runs configured gradient-flow experiments and persists their outputs"""

    def __init__(
        self,
        gradient_flow: GradientFlowService,
        repository: TrajectoryRepository,
        workers: int = 1,
    ):
        self.gradient_flow = gradient_flow
        self.repository = repository
        self.workers = workers

    def simulate(
        self,
        cfg: ExperimentConfig,
        seed: Optional[int] = None,
        directory: Optional[Path] = None,
    ) -> RunSummary:
        """
        Integrate from the configured start, run the requested checks and write
        trajectory.csv and summary.txt. `seed` overrides the init seed.
        """
        shape = cfg.shape.build()
        dom = cfg.domain.build()
        target = cfg.target.build(dom)
        theta0 = cfg.init.build(shape, seed)
        directory = cfg.output.directory if directory is None else directory

        traj = self.gradient_flow.integrate(theta0, target, dom, cfg.flow)
        summary = RunSummary(
            H=shape.H,
            seed=cfg.init.seed() if seed is None else seed,
            init=cfg.init.describe(shape, seed),
            t_end=cfg.flow.t_end,
            initial_risk=float(traj.risk[0]),
            terminal_risk=float(traj.risk[-1]),
            rung=terminal_rung(traj),
            checks=tuple(run_checks(traj, cfg.checks)),
            stats=traj.stats,
            terminal_grad_norm=float(traj.grad_norm[-1]),
            bounded=boundedness_check(traj).ok,
        )
        self.repository.save_trajectory(traj, directory, cfg.stride)
        self.repository.save_summary(summary, directory)
        logger.info(
            f"Run in {directory}: terminal risk {summary.terminal_risk:.6e}, rung {summary.rung}, "
            f"{'PASS' if summary.passed else 'FAIL'}"
        )
        return summary

    def _sweep_one(self, cfg: ExperimentConfig, seed: int, directory: Path) -> SweepRow:
        try:
            summary = self.simulate(cfg, seed, directory / f'seed_{seed}')
        except SolverError as exc:
            logger.warning(f"Seed {seed} failed: {exc}")
            return SweepRow(seed=seed, terminal_risk=float('nan'), rung='NONE', passed=False, note=f'solver: {exc}')
        notes = [check.name.value for check in summary.checks if not check.passed]
        if summary.off_ladder:
            notes.append('settled between rungs')
        elif summary.rung == 'NONE':
            notes.append('not converged at horizon')
        return SweepRow(
            seed=seed,
            terminal_risk=summary.terminal_risk,
            rung=summary.rung,
            passed=summary.passed,
            note=','.join(notes),
        )

    def sweep(self, cfg: ExperimentConfig, seeds: Sequence[int], directory: Optional[Path] = None) -> list[SweepRow]:
        """One simulate run per seed, each in its own seed_<k> directory, then sweep.tsv."""
        directory = cfg.output.directory if directory is None else directory
        if self.workers > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                rows = list(pool.map(_sweep_task, [(self, cfg, seed, directory) for seed in seeds]))
        else:
            rows = [self._sweep_one(cfg, seed, directory) for seed in seeds]
        self.repository.save_sweep(rows, directory)
        rungs: dict[str, int] = {}
        for row in rows:
            rungs[row.rung] = rungs.get(row.rung, 0) + 1
        logger.info(f"Sweep of {len(rows)} seeds: rung histogram {rungs}")
        return rows


def _sweep_task(task: tuple) -> SweepRow:
    service, cfg, seed, directory = task
    return service._sweep_one(cfg, seed, directory)
