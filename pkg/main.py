import sys

from src.app_init import run
from src.logger_config import setup_logging


if __name__ == "__main__":
    setup_logging()
    sys.exit(run(sys.argv[1:]))
