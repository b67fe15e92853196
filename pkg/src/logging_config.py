#!/usr/bin/env python3
"""
Unified logging configuration for the graphssl toolkit.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from datetime import datetime

# Standardized logging formats
LOG_FORMAT_STANDARD = "[%(asctime)s] [%(levelname)s] %(message)s"

# LogRecord attributes that are not user supplied `extra=` fields
_RESERVED_RECORD_KEYS = frozenset(
    {
        "name",
        "msg",
        "args",
        "levelname",
        "levelno",
        "pathname",
        "filename",
        "module",
        "lineno",
        "funcName",
        "created",
        "msecs",
        "relativeCreated",
        "thread",
        "threadName",
        "processName",
        "process",
        "taskName",
        "exc_info",
        "exc_text",
        "stack_info",
    }
)


class StructuredFormatter(logging.Formatter):
    """JSON formatter: one object per record, `extra=` fields included."""

    def __init__(self, use_json: bool = False):
        super().__init__(LOG_FORMAT_STANDARD, datefmt="%Y-%m-%d %H:%M:%S")
        self.use_json = use_json

    def format(self, record):
        if not self.use_json:
            return super().format(record)

        log_entry = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        for key, value in record.__dict__.items():
            if key not in _RESERVED_RECORD_KEYS:
                log_entry[key] = value

        return json.dumps(log_entry, ensure_ascii=False, default=str)


def get_log_level_from_env(default_level: int = logging.INFO) -> int:
    """
    Get logging level from the LOG_LEVEL environment variable.

    Args:
        default_level: Level used when LOG_LEVEL is unset or unknown

    Returns:
        Logging level constant
    """
    log_level_str = os.environ.get("LOG_LEVEL", "").upper()

    level_mapping = {
        "QUIET": logging.ERROR,  # QUIET = only errors and above
        "DEBUG": logging.DEBUG,
        "INFO": logging.INFO,
        "WARNING": logging.WARNING,
        "ERROR": logging.ERROR,
        "CRITICAL": logging.CRITICAL,
    }

    return level_mapping.get(log_level_str, default_level)


def use_json_from_env() -> bool:
    """True when LOG_FORMAT=json is set."""
    return os.environ.get("LOG_FORMAT", "").strip().lower() == "json"


def setup_logger(
    name: str,
    log_file: str | None = None,
    level: int | None = None,
    use_json: bool | None = None,
) -> logging.Logger:
    """
    Set up a logger with consistent formatting.

    Args:
        name: Logger name (the CLI passes the package name so module loggers propagate)
        log_file: Optional log file path (LOG_FILE when None)
        level: Logging level (LOG_LEVEL when None)
        use_json: JSON records (LOG_FORMAT=json when None)

    Returns:
        Configured logger instance
    """
    if level is None:
        level = get_log_level_from_env(logging.INFO)
    if use_json is None:
        use_json = use_json_from_env()
    if log_file is None:
        log_file = os.environ.get("LOG_FILE") or None

    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers.clear()
    logger.propagate = False

    formatter = StructuredFormatter(use_json=use_json)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def log_epoch(logger: logging.Logger, epoch: int, epochs: int, mean_loss: float) -> None:
    """Log the end of a pre-training epoch."""
    logger.info(f"Epoch {epoch + 1}/{epochs}: mean loss {mean_loss:.6f}", extra={"epoch": epoch, "loss": mean_loss})


def log_run_record(logger: logging.Logger, label: str, accuracy_mean: float, accuracy_std: float) -> None:
    """Log a finished linear evaluation."""
    logger.info(
        f"{label}: accuracy {100 * accuracy_mean:.2f} ± {100 * accuracy_std:.2f}",
        extra={"accuracy_mean": accuracy_mean, "accuracy_std": accuracy_std},
    )


def log_component_error(logger: logging.Logger, component: str, message: str) -> None:
    """Log error with component identification."""
    logger.error(f"[{component}] {message}")


def log_component_warning(logger: logging.Logger, component: str, message: str) -> None:
    """Log warning with component identification."""
    logger.warning(f"[{component}] {message}")
