import os
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

from ticlust.base.config import LOGGING_CONFIG
from ticlust.base.errors import ConfigError

EVENTS_LEVEL_NUM = 38
EVENTS_LOGGER_NAME = "ticlust.events"
DEFAULT_LOG_BACKUP_COUNT = 10
DEFAULT_EVENTS_RETENTION_SIZE = 64 * 1024 * 1024  # 64 MB

logging.addLevelName(EVENTS_LEVEL_NUM, "EVENT")

_events_logger = logging.getLogger(EVENTS_LOGGER_NAME)
_events_logger.setLevel(EVENTS_LEVEL_NUM)
_events_logger.addHandler(logging.NullHandler())
# Events go to events.log only, never to the console.
_events_logger.propagate = False


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger from LOGGING_CONFIG; `level` overrides the configured level."""
    level = (level or LOGGING_CONFIG['level']).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"unknown logging level {level!r}")
    logging.basicConfig(level=level, format=LOGGING_CONFIG['format'], force=True)


def setup_events_logger(full_path, events_retention_size=DEFAULT_EVENTS_RETENTION_SIZE):
    """Attach a size-rotated events.log under `full_path` to the events logger."""
    os.makedirs(full_path, exist_ok=True)

    formatter = logging.Formatter(
        "%(asctime)s | %(levelname)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    log_path = os.path.join(full_path, "events.log")
    for handler in list(_events_logger.handlers):
        if isinstance(handler, RotatingFileHandler):
            if handler.baseFilename == os.path.abspath(log_path):
                return _events_logger
            _events_logger.removeHandler(handler)
            handler.close()

    file_handler = RotatingFileHandler(
        log_path,
        maxBytes=int(events_retention_size),
        backupCount=DEFAULT_LOG_BACKUP_COUNT,
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(EVENTS_LEVEL_NUM)
    _events_logger.addHandler(file_handler)

    return _events_logger


def close_events_logger() -> None:
    """Detach and close every file handler of the events logger."""
    for handler in list(_events_logger.handlers):
        if isinstance(handler, RotatingFileHandler):
            _events_logger.removeHandler(handler)
            handler.close()


def log_event(message: str) -> None:
    """Record one EVENT-level line (a no-op until setup_events_logger is called)."""
    _events_logger.log(EVENTS_LEVEL_NUM, message)
