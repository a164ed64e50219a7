"""Logging utilities for dogfit."""

import logging
import os
from enum import IntEnum
from typing import Union

LOG_ENV_VAR = "DOGFIT_LOG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class LogLevel(IntEnum):
    """Verbosity levels accepted by ``DOGFIT_LOG`` as integers."""

    QUIET = 0  # Only warnings and errors
    NORMAL = 1  # Info level, stage progress
    VERBOSE = 2  # Per-step loss breakdowns
    DEBUG = 3  # Skip records and full debug information


LOGLEVEL_MAP = {
    LogLevel.QUIET: logging.WARNING,
    LogLevel.NORMAL: logging.INFO,
    LogLevel.VERBOSE: logging.DEBUG,
    LogLevel.DEBUG: logging.DEBUG,
}

_NAMED_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}


def resolve_level(value: Union[str, int, None]) -> int:
    """Turn a level name, LogLevel value or logging constant into a logging level.

    Unknown values fall back to INFO.
    """
    if value is None or value == "":
        return logging.INFO
    if isinstance(value, LogLevel):
        return LOGLEVEL_MAP[value]
    if isinstance(value, int):
        if value in LogLevel._value2member_map_:
            return LOGLEVEL_MAP[LogLevel(value)]
        return value
    text = str(value).strip().lower()
    if text in _NAMED_LEVELS:
        return _NAMED_LEVELS[text]
    if text.isdigit():
        return resolve_level(int(text))
    return logging.INFO


def configure_logging(level: Union[str, int, None] = None) -> int:
    """Configure the ``dogfit`` logger.

    An explicit ``level`` wins over the ``DOGFIT_LOG`` environment variable.

    Returns:
        The logging level that was applied.
    """
    resolved = resolve_level(level if level is not None else os.environ.get(LOG_ENV_VAR))
    logging.basicConfig(level=resolved, format=LOG_FORMAT)
    logging.getLogger("dogfit").setLevel(resolved)
    return resolved

