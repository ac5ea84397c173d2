"""
Command-line entry: simulate, ladder, verify and sweep.

Exit status: 0 pass, 1 check failure, 2 usage or config error, 3 numeric
failure of the solver.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from dependency_injector.wiring import Provide, inject
from pydantic import ValidationError

from relulab import settings
from relulab.exceptions import ConfigError, DimensionError, SolverError
from relulab.logconfig import configure_logging
from theory.services import critical_ladder
from experiments.config import ExperimentConfig, load_config
from experiments.containers import ExperimentContainer, experiment_container
from experiments.services import ExperimentService
from experiments.suites import SUITES, UnknownSuiteError, VerificationService


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _load(config_path: Path | str) -> Optional[ExperimentConfig]:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        logger.error(str(exc))
    except ValidationError as exc:
        for error in exc.errors():
            field = '.'.join(str(part) for part in error['loc'])
            logger.error(f"Invalid config {config_path}: {field}: {error['msg']}")
    return None


@inject
def cmd_simulate(
    config_path: Path | str,
    seed: Optional[int] = None,
    experiment_service: ExperimentService = Provide[ExperimentContainer.experiment_service],
) -> int:
    cfg = _load(config_path)
    if cfg is None:
        return EXIT_USAGE
    try:
        summary = experiment_service.simulate(cfg, seed)
    except DimensionError as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    except SolverError as exc:
        logger.error(f"Solver failed at t={exc.t:.6g}: {exc}")
        return EXIT_NUMERIC
    return EXIT_OK if summary.passed else EXIT_CHECK_FAILED


def cmd_ladder(H: int, alpha: float, a: float, b: float, rho: float = 1.0) -> int:
    """Print every rung (n, value) and the smallest positive rung."""
    try:
        ladder = critical_ladder(H, alpha, a, b, rho)
    except (ValueError, ValidationError) as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    print('n\tvalue')
    for rung in ladder.rungs:
        print(f'{rung.label}\t{rung.value:.12g}')
    if ladder.min_positive is not None:
        print(f'threshold\t{ladder.min_positive:.12g}')
    return EXIT_OK


@inject
def cmd_verify(
    suite: str,
    seed: int = settings.DEFAULT_SEED,
    n_cases: int = 20,
    report_path: Optional[Path] = None,
    verification_service: VerificationService = Provide[ExperimentContainer.verification_service],
) -> int:
    try:
        results = verification_service.run(suite, seed, n_cases)
    except UnknownSuiteError as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    report = '\n'.join(['name\tcases\tmax_deviation\tverdict', *(result.line() for result in results)]) + '\n'
    print(report, end='')
    if report_path is not None:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(report)
        logger.info(f"Wrote {report_path}")
    return EXIT_OK if all(result.passed for result in results) else EXIT_CHECK_FAILED


@inject
def cmd_sweep(
    config_path: Path | str,
    seeds: Sequence[int],
    experiment_service: ExperimentService = Provide[ExperimentContainer.experiment_service],
) -> int:
    cfg = _load(config_path)
    if cfg is None:
        return EXIT_USAGE
    try:
        rows = experiment_service.sweep(cfg, seeds)
    except DimensionError as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    return EXIT_OK if all(row.passed for row in rows) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='relulab', description='Gradient-flow laboratory for shallow ReLU networks')
    parser.add_argument('--log-level', default=None, help='overrides RELULAB_LOG_LEVEL')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='integrate one configured flow')
    simulate.add_argument('config', type=Path)
    simulate.add_argument('--seed', type=int, default=None, help='overrides init.random.seed')

    ladder = commands.add_parser('ladder', help='print the critical risk values for an affine target')
    ladder.add_argument('--H', type=int, required=True)
    ladder.add_argument('--alpha', type=float, default=1.0)
    ladder.add_argument('--a', type=float, default=0.0)
    ladder.add_argument('--b', type=float, default=1.0)
    ladder.add_argument('--rho', type=float, default=1.0)

    verify = commands.add_parser('verify', help='run property suites')
    verify.add_argument('suite', help=f"one of {', '.join(SUITES)} or all")
    verify.add_argument('--seed', type=int, default=settings.DEFAULT_SEED)
    verify.add_argument('--cases', type=int, default=20)
    verify.add_argument('--report', type=Path, default=None, help='also write the TSV report here')

    sweep = commands.add_parser('sweep', help='run one configured flow per seed')
    sweep.add_argument('config', type=Path)
    seeds = sweep.add_mutually_exclusive_group(required=True)
    seeds.add_argument('--seeds', type=int, nargs='+')
    seeds.add_argument('--count', type=int, help='seeds 1..count')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    configure_logging(args.log_level)
    experiment_container.wire(modules=[__name__])

    if args.command == 'simulate':
        return cmd_simulate(args.config, args.seed)
    if args.command == 'ladder':
        return cmd_ladder(args.H, args.alpha, args.a, args.b, args.rho)
    if args.command == 'verify':
        if args.cases < 1:
            logger.error(f'--cases must be positive, got {args.cases}')
            return EXIT_USAGE
        return cmd_verify(args.suite, args.seed, args.cases, args.report)
    seeds = args.seeds if args.seeds is not None else list(range(1, args.count + 1))
    return cmd_sweep(args.config, seeds)


if __name__ == '__main__':
    sys.exit(main())
