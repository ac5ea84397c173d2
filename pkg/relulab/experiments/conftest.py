"""
Pytest fixtures for experiment runner tests.

conftest.py is automatically discovered by pytest and makes fixtures
available to all test files in this directory.
"""
from pathlib import Path
from typing import Sequence
from unittest.mock import create_autospec

import pytest
import yaml

from flow.models import Trajectory
from flow.services import GradientFlowService
from risk.services import ExactRiskService
from experiments.containers import experiment_container
from experiments.repositories import (
    CsvTrajectoryRepository,
    RunSummary,
    SweepRow,
    TRAJECTORY_FILE,
    TrajectoryTable,
    trajectory_columns,
    trajectory_matrix,
)
from experiments.services import ExperimentService
from experiments.suites import VerificationService


class InMemoryTrajectoryRepository:
    """In-memory implementation of TrajectoryRepository for testing"""

    def __init__(self):
        self.tables: dict[Path, TrajectoryTable] = {}
        self.summaries: dict[Path, RunSummary] = {}
        self.sweeps: dict[Path, list[SweepRow]] = {}

    def save_trajectory(self, traj: Trajectory, directory: Path, stride: int = 1) -> Path:
        path = directory / TRAJECTORY_FILE
        self.tables[path] = TrajectoryTable(columns=trajectory_columns(traj), data=trajectory_matrix(traj, stride))
        return path

    def load_trajectory(self, path: Path) -> TrajectoryTable:
        return self.tables[path]

    def save_summary(self, summary: RunSummary, directory: Path) -> Path:
        self.summaries[directory] = summary
        return directory / 'summary.txt'

    def save_sweep(self, rows: Sequence[SweepRow], directory: Path) -> Path:
        self.sweeps[directory] = list(rows)
        return directory / 'sweep.tsv'


@pytest.fixture(autouse=True)
def wired_container():
    experiment_container.wire(modules=['experiments.commands'])
    yield experiment_container
    experiment_container.unwire()


@pytest.fixture
def trajectory_repository():
    return InMemoryTrajectoryRepository()


@pytest.fixture
def csv_repository():
    return CsvTrajectoryRepository()


@pytest.fixture
def flow_service():
    return GradientFlowService(risk_evaluator=ExactRiskService())


@pytest.fixture
def experiment_service(flow_service, trajectory_repository):
    return ExperimentService(gradient_flow=flow_service, repository=trajectory_repository, workers=1)


@pytest.fixture
def mock_experiment_service():
    return create_autospec(ExperimentService, instance=True)


@pytest.fixture
def mock_verification_service():
    return create_autospec(VerificationService, instance=True)


@pytest.fixture
def exact_fit_config(tmp_path):
    """Config mapping for f(x) = x started at the exact fit, every check enabled"""
    return {
        'shape': {'d': 1, 'H': 1},
        'domain': {'a': 0.0, 'b': 1.0, 'rho': 1.0},
        'target': {'alpha': 1.0, 'beta': 0.0},
        'init': {'theta': [1.0, 0.0, 1.0, 0.0]},
        'flow': {'t_end': 10.0, 'dt_max': 1.0},
        'checks': ['energy', 'lyapunov', 'boundedness', 'limsup', 'conservation', 'monotone', 'conditional', 'uniform'],
        'output': {'directory': str(tmp_path / 'run'), 'stride': 1},
    }


@pytest.fixture
def write_config(tmp_path):
    """Factory writing a config mapping to a YAML file"""
    def write(mapping: dict, name: str = 'experiment.yaml') -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(mapping))
        return path
    return write


@pytest.fixture
def configs_dir() -> Path:
    return Path(__file__).resolve().parent.parent / 'configs'
