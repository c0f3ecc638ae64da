"""
Logging setup

Configures loguru sinks from the `logging` section of the lab config.
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger


def setup_logging(level: str = "INFO", file: Optional[str] = None, console: bool = True) -> None:
    """Replace the default loguru sink with the configured ones"""
    logger.remove()
    if console:
        logger.add(sys.stderr, level=level, format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}")
    if file:
        Path(file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(file, level=level, rotation="10 MB", enqueue=True)
