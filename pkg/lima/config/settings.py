"""
lima/config/settings.py

Environment wiring for lima
===========================
The only module that reads process environment. Everything else asks here.

Pattern:
    from lima.config.settings import configure_logging, default_jobs

    configure_logging()          # honours LIMA_LOG
    jobs = default_jobs()

Environment Variables:
    LIMA_LOG:     Log verbosity (DEBUG, INFO, WARNING, ERROR). Default WARNING.
    LIMA_JOBS:    Worker processes for sweeps. Default 1.
"""

import logging
import os
import sys
from typing import Optional, Union

# 1. Load Environment Variables
from dotenv import load_dotenv
load_dotenv()

logger = logging.getLogger("Lima.Config")

ROOT_LOGGER_NAME = "Lima"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_VALID_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_handler: Optional[logging.Handler] = None


def log_level() -> int:
    """Resolve LIMA_LOG to a logging level; unknown values fall back to WARNING."""
    raw = os.getenv("LIMA_LOG", "WARNING").strip().upper()
    if raw not in _VALID_LEVELS:
        return logging.WARNING
    return getattr(logging, raw)


def configure_logging(level: Optional[Union[int, str]] = None) -> logging.Logger:
    """
    Attach a single stderr handler to the "Lima" logger.

    Safe to call repeatedly: the handler is installed once, the level is
    updated every call.
    """
    global _handler
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if level is None:
        resolved = log_level()
    elif isinstance(level, str):
        resolved = getattr(logging, level.upper(), logging.WARNING)
    else:
        resolved = level

    if _handler is None:
        _handler = logging.StreamHandler(sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(_handler)
        root.propagate = False
    root.setLevel(resolved)
    return root


def default_jobs() -> int:
    try:
        return max(1, int(os.getenv("LIMA_JOBS", "1")))
    except ValueError:
        logger.warning("ignoring non-integer LIMA_JOBS=%r", os.getenv("LIMA_JOBS"))
        return 1
