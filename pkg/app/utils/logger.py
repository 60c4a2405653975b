"""Logging configuration"""

import logging
import sys
from functools import lru_cache

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
PACKAGE_LOGGER = "app"


@lru_cache
def get_logger(name: str) -> logging.Logger:
    """Get a logger that writes through the package-level stdout handler"""
    root = logging.getLogger(PACKAGE_LOGGER)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        root.propagate = False

    if name == PACKAGE_LOGGER or name.startswith(PACKAGE_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{PACKAGE_LOGGER}.{name}")


def configure_logging(level: str = "INFO") -> None:
    """Set the level of every logger in the package"""
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    get_logger(PACKAGE_LOGGER).setLevel(numeric_level)

