from dependency_injector import containers, providers

from risk.containers import RiskContainer
from smoothing.services import SmoothedRiskService


class SmoothingContainer(containers.DeclarativeContainer):
    """Container for smoothed risks"""

    risk = providers.Container(RiskContainer)

    smoothed_risk_service = providers.Singleton(
        SmoothedRiskService,
        exact_risk=risk.exact_risk_service,
    )


# Global container instance
smoothing_container = SmoothingContainer()
