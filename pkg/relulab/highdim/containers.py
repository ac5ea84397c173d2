from dependency_injector import containers, providers

from relulab import settings
from highdim.services import DEFAULT_BLOCK_SIZE, MonteCarloService


class HighDimContainer(containers.DeclarativeContainer):
    """Container for Monte-Carlo estimation in general input dimension"""

    monte_carlo_service = providers.Singleton(
        MonteCarloService,
        block_size=DEFAULT_BLOCK_SIZE,
        workers=settings.WORKERS,
    )


# Global container instance
highdim_container = HighDimContainer()
