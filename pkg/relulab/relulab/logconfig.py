import logging.config

from relulab import settings


def configure_logging(level: str | None = None) -> None:
    """Configure the root logger; called once by the command-line entry."""
    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'default': {
                'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
            },
        },
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'formatter': 'default',
                'stream': 'ext://sys.stderr',
            },
        },
        'root': {
            'handlers': ['console'],
            'level': level or settings.LOG_LEVEL,
        },
    })
