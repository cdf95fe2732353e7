"""Logging configuration.

Library modules only create loggers; handlers are installed once by the entry point.
"""

import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(
    level: int = logging.INFO, log_file: Optional[Union[str, Path]] = None
) -> logging.Logger:
    """Configure the package root logger.

    Args:
        level (int): Logging level for the ``src`` logger hierarchy.
        log_file (Optional[Union[str, Path]]): Optional file that receives a copy of
            every record.

    Returns:
        logging.Logger: The configured package logger.
    """
    logger = logging.getLogger("src")
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    logger.addHandler(stream)

    if log_file is not None:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def progress_enabled() -> bool:
    """Return True when progress bars should be displayed."""
    return logging.getLogger("src").getEffectiveLevel() <= logging.INFO
