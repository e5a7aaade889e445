#!/usr/bin/env python3
"""
Logging utilities for the Topic/Expectation Pipeline

This module configures loguru sinks and offers a small helper facade used by
the commands.
"""

import json
import sys
from pathlib import Path
from typing import Any, Mapping, Optional

from loguru import logger

from .config import Config

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


class PipelineLogger:
    """Console and per-run file logging."""

    def __init__(self, log_file: Optional[Path] = None, level: Optional[str] = None):
        """
        Initialize logger sinks.

        Args:
            log_file (Optional[Path]): Optional log file path
            level (Optional[str]): Console level, defaults to ``Config.LOG_LEVEL``
        """
        console_level = level or ('DEBUG' if Config.DEBUG_MODE else Config.LOG_LEVEL)

        # Remove default handler
        logger.remove()

        logger.add(sys.stderr, format=CONSOLE_FORMAT, level=console_level)

        if log_file:
            log_file = Path(log_file)
            log_file.parent.mkdir(parents=True, exist_ok=True)
            logger.add(
                log_file,
                format=FILE_FORMAT,
                level="DEBUG",
                rotation="10 MB",
                retention="30 days"
            )

    @staticmethod
    def log_config(name: str, values: Mapping[str, Any]):
        """
        Log an effective configuration at debug level.

        Args:
            name (str): Configuration name
            values (Mapping[str, Any]): Effective values
        """
        logger.debug(f"{name}: {json.dumps(dict(values), indent=2, sort_keys=True, default=str)}")

    @staticmethod
    def log_error(error: Exception, context: str = ""):
        """
        Log error with context.

        Args:
            error (Exception): Error to log
            context (str): Additional context
        """
        message = f"Error: {error}"
        if context:
            message = f"{context} - {message}"
        logger.error(message)

    @staticmethod
    def log_success(message: str):
        logger.success(message)

    @staticmethod
    def log_info(message: str):
        logger.info(message)

    @staticmethod
    def log_warning(message: str):
        logger.warning(message)


def setup_logging(log_file: Optional[Path] = None, level: Optional[str] = None) -> PipelineLogger:
    """
    Setup logging for the application.

    Args:
        log_file (Optional[Path]): Optional log file path
        level (Optional[str]): Console log level

    Returns:
        PipelineLogger: Configured logger instance
    """
    return PipelineLogger(log_file, level)
