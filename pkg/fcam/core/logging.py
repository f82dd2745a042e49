"""Logging setup for the command-line entry points."""
import logging
from typing import Optional

from fcam.core.config import get_settings

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger from FCAM_LOG_LEVEL or an explicit level."""
    level_name = (level or get_settings().FCAM_LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT, force=True)
    # numba's compiler logging is noisy at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)
