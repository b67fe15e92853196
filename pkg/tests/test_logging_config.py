#!/usr/bin/env python3
"""
Tests for logging_config.py module.
"""

import json
import logging
import os
import sys
import tempfile
import unittest
from unittest.mock import patch

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from src.logging_config import (
    StructuredFormatter,
    get_log_level_from_env,
    log_epoch,
    log_run_record,
    setup_logger,
    use_json_from_env,
)


class _ListHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.records = []

    def emit(self, record):
        self.records.append(record)


class TestLogLevelFromEnv(unittest.TestCase):
    """Test cases for LOG_LEVEL parsing."""

    def test_default_when_unset(self):
        with patch.dict(os.environ, {}, clear=True):
            assert get_log_level_from_env() == logging.INFO

    def test_named_levels_case_insensitive(self):
        for text, level in (("debug", logging.DEBUG), ("Warning", logging.WARNING), ("CRITICAL", logging.CRITICAL)):
            with patch.dict(os.environ, {"LOG_LEVEL": text}):
                assert get_log_level_from_env() == level

    def test_quiet_maps_to_error(self):
        with patch.dict(os.environ, {"LOG_LEVEL": "QUIET"}):
            assert get_log_level_from_env() == logging.ERROR

    def test_invalid_level_falls_back_to_default(self):
        with patch.dict(os.environ, {"LOG_LEVEL": "VERBOSE"}):
            assert get_log_level_from_env(logging.WARNING) == logging.WARNING

    def test_empty_string_falls_back_to_default(self):
        with patch.dict(os.environ, {"LOG_LEVEL": ""}):
            assert get_log_level_from_env(logging.ERROR) == logging.ERROR


class TestSetupLogger(unittest.TestCase):
    """Test cases for setup_logger."""

    def test_env_level(self):
        with patch.dict(os.environ, {"LOG_LEVEL": "DEBUG"}):
            logger = setup_logger("graphssl_test_env")
            assert logger.level == logging.DEBUG

    def test_explicit_level_wins_over_env(self):
        with patch.dict(os.environ, {"LOG_LEVEL": "ERROR"}):
            logger = setup_logger("graphssl_test_explicit", level=logging.DEBUG)
            assert logger.level == logging.DEBUG

    def test_repeated_setup_does_not_duplicate_handlers(self):
        with patch.dict(os.environ, {}, clear=True):
            setup_logger("graphssl_test_repeat")
            logger = setup_logger("graphssl_test_repeat")
            assert len(logger.handlers) == 1
            assert logger.propagate is False

    def test_log_file_from_env(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "logs", "run.log")
            with patch.dict(os.environ, {"LOG_FILE": path}, clear=True):
                logger = setup_logger("graphssl_test_file")
                logger.info("written to file")
                for handler in logger.handlers:
                    handler.flush()
                    handler.close()
            with open(path, encoding="utf-8") as handle:
                assert "written to file" in handle.read()

    def test_json_format_from_env(self):
        with patch.dict(os.environ, {"LOG_FORMAT": "JSON"}):
            assert use_json_from_env() is True
        with patch.dict(os.environ, {}, clear=True):
            assert use_json_from_env() is False


class TestStructuredFormatter(unittest.TestCase):
    """Test cases for the JSON record format."""

    def _record(self, **extra):
        record = logging.LogRecord("src.trainer", logging.INFO, __file__, 1, "Epoch %d", (3,), None)
        for key, value in extra.items():
            setattr(record, key, value)
        return record

    def test_json_includes_extra_fields(self):
        payload = json.loads(StructuredFormatter(use_json=True).format(self._record(epoch=3, loss=0.25)))
        assert payload["message"] == "Epoch 3"
        assert payload["level"] == "INFO"
        assert payload["logger"] == "src.trainer"
        assert payload["epoch"] == 3
        assert payload["loss"] == 0.25
        assert "args" not in payload

    def test_standard_format(self):
        text = StructuredFormatter(use_json=False).format(self._record())
        assert "[INFO] Epoch 3" in text


class TestDomainHelpers(unittest.TestCase):
    """Test cases for log_epoch and log_run_record."""

    def setUp(self):
        self.logger = logging.getLogger("graphssl_test_helpers")
        self.logger.handlers.clear()
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.handler = _ListHandler()
        self.logger.addHandler(self.handler)

    def test_log_epoch_is_one_based_with_extras(self):
        log_epoch(self.logger, 0, 100, 1.5)
        record = self.handler.records[0]
        assert "Epoch 1/100" in record.getMessage()
        assert record.epoch == 0
        assert record.loss == 1.5

    def test_log_run_record_in_percent(self):
        log_run_record(self.logger, "MUTAG", 0.9005, 0.0054)
        message = self.handler.records[0].getMessage()
        assert "90.05" in message
        assert "0.54" in message


if __name__ == "__main__":
    unittest.main()
