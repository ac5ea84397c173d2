from dependency_injector import containers, providers

from risk.containers import RiskContainer
from theory.services import TheoryService


class TheoryContainer(containers.DeclarativeContainer):
    """Container for closed-form diagnostics"""

    risk = providers.Container(RiskContainer)

    theory_service = providers.Singleton(
        TheoryService,
        risk_evaluator=risk.exact_risk_service,
    )


# Global container instance
theory_container = TheoryContainer()
