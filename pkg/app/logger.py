# app/logger.py

"""
Logging configuration for HILONet.

Sets up the root logger with a size-rotated log file and console output. Library modules
log through the standard ``logging`` calls and never configure handlers themselves.
"""

import logging
import os
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(log_dir=None, level=None):
    """
    Configures logging with an environment-based log level.

    Args:
        log_dir (str or Path, optional): Directory for ``hilonet.log``; defaults to ``logs/``
            next to the package.
        level (str, optional): Level name; wins over the ``LOG_LEVEL`` environment variable.
    """
    logger = logging.getLogger()

    # Logging is already set up; skip further configuration
    if len(logger.handlers) > 0:
        return

    log_dir = Path(log_dir) if log_dir else Path(__file__).parent.parent / 'logs'
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / 'hilonet.log'

    log_level = (level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    numeric_level = getattr(logging, log_level, logging.INFO)

    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=5 * 1024 * 1024,  # 5MB per log file
        backupCount=5
    )
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    file_handler.setLevel(numeric_level)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    console_handler.setLevel(numeric_level)

    logger.setLevel(numeric_level)
    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    # matplotlib is chatty at DEBUG
    logging.getLogger('matplotlib').setLevel(max(numeric_level, logging.WARNING))
