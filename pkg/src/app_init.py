import logging

from .cli_setup import UsageError, parse_config
from .experiments import VerificationError
from .handlers import register_handlers
from .logger_config import setup_logging
from .oracle import ConditioningError
from .sampling import DimensionError
from .spectra import DomainError, SpectrumError


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_VERIFICATION = 3


def run(argv: list[str]) -> int:
    """Parse argv, run the command and map failures to exit codes."""
    try:
        config = parse_config(argv)
    except UsageError as e:
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE
    setup_logging(config.log_level)
    handlers = register_handlers()
    logging.info(f"Running {config.command} with seed {config.seed}")
    try:
        handlers[config.command](config)
    except UsageError as e:
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE
    except (SpectrumError, DomainError, DimensionError, ConditioningError) as e:
        logging.error(f"Numerical domain error: {e}")
        return EXIT_DOMAIN
    except VerificationError as e:
        logging.error(f"Verification failed: {e}")
        return EXIT_VERIFICATION
    except OSError as e:
        logging.error(f"Output error: {e}")
        return EXIT_USAGE
    logging.info(f"{config.command} finished")
    return EXIT_OK
