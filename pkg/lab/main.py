import logging
import sys
from typing import List, Optional

from api.cli import run_cli
from config.lab_settings import get_lab_settings
from utils.exceptions import LabException


class StepChatterFilter(logging.Filter):
    """Drop per-step progress records unless DEBUG is enabled"""
    def filter(self, record):
        if getattr(record, "step_chatter", False):
            return logging.getLogger().isEnabledFor(logging.DEBUG)
        return True


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    for handler in logging.getLogger().handlers:
        handler.addFilter(StepChatterFilter())


logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(get_lab_settings().FSF_LOG_LEVEL)
    try:
        return run_cli(argv)
    except LabException as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
