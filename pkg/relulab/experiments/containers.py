from dependency_injector import containers, providers

from relulab import settings
from flow.containers import FlowContainer
from highdim.containers import HighDimContainer
from smoothing.containers import SmoothingContainer
from theory.containers import TheoryContainer
from experiments.repositories import CsvTrajectoryRepository
from experiments.services import ExperimentService
from experiments.suites import VerificationService


class ExperimentContainer(containers.DeclarativeContainer):
    """Dependency injection container for the experiment runner"""

    # Reused app containers
    flow = providers.Container(FlowContainer)
    smoothing = providers.Container(SmoothingContainer)
    theory = providers.Container(TheoryContainer)
    highdim = providers.Container(HighDimContainer)

    # Repositories
    trajectory_repository = providers.Singleton(CsvTrajectoryRepository)

    # Services
    experiment_service = providers.Singleton(
        ExperimentService,
        gradient_flow=flow.gradient_flow_service,
        repository=trajectory_repository,
        workers=settings.WORKERS,
    )

    verification_service = providers.Singleton(
        VerificationService,
        risk_evaluator=flow.risk.exact_risk_service,
        smoothed_risk=smoothing.smoothed_risk_service,
        gradient_flow=flow.gradient_flow_service,
        theory=theory.theory_service,
        monte_carlo=highdim.monte_carlo_service,
    )


# Global container instance
experiment_container = ExperimentContainer()
