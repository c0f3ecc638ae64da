"""
工具函数模块

File helpers, logging setup and the error hierarchy.
"""

from .file_utils import FileUtils
from .log_utils import setup_logging
from .errors import CAATError, ConfigError

__all__ = ["FileUtils", "setup_logging", "CAATError", "ConfigError"]
