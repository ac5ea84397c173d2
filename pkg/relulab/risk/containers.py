from dependency_injector import containers, providers

from network.models import ActivationConvention
from risk.services import ExactRiskService


class RiskContainer(containers.DeclarativeContainer):
    """Container for exact risk evaluation"""

    exact_risk_service = providers.Singleton(
        ExactRiskService,
        convention=ActivationConvention.STRICT,
    )


# Global container instance
risk_container = RiskContainer()
