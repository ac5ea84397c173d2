from dependency_injector import containers, providers

from risk.containers import RiskContainer
from flow.services import GradientFlowService


class FlowContainer(containers.DeclarativeContainer):
    """Container for gradient-flow integration"""

    risk = providers.Container(RiskContainer)

    gradient_flow_service = providers.Singleton(
        GradientFlowService,
        risk_evaluator=risk.exact_risk_service,
    )


# Global container instance
flow_container = FlowContainer()
