"""Tests for logging configuration module."""
import io
import logging
import os
import re
import tempfile

import pytest

from comb_reshaper import logging_config


@pytest.mark.parametrize("name, expected", [
    (None, logging.INFO),
    ("", logging.INFO),
    ("DEBUG", logging.DEBUG),
    ("warning", logging.WARNING),
    ("Error", logging.ERROR),
    ("CRITICAL", logging.CRITICAL),
    ("INVALID", logging.INFO),
])
def test_level_from_name(name, expected):
    assert logging_config.level_from_name(name) == expected


def test_setup_logging_creates_logger():
    logger = logging_config.setup_logging("test_logger")
    assert isinstance(logger, logging.Logger)
    assert logger.name == "test_logger"
    logger.handlers.clear()


def test_setup_logging_with_custom_level():
    logger = logging_config.setup_logging("test_logger_level", level=logging.WARNING)
    assert logger.level == logging.WARNING
    logger.handlers.clear()


def test_setup_logging_adds_stdout_handler():
    logger = logging_config.setup_logging("test_logger_stdout")
    assert any(isinstance(h, logging.StreamHandler) for h in logger.handlers)
    logger.handlers.clear()


def test_setup_logging_with_file():
    with tempfile.NamedTemporaryFile(delete=False, suffix='.log') as f:
        log_file = f.name
    try:
        logger = logging_config.setup_logging("test_logger_file", log_file=log_file)
        assert len(logger.handlers) >= 2
        assert any(isinstance(h, logging.FileHandler) for h in logger.handlers)
        for handler in logger.handlers:
            handler.close()
        logger.handlers.clear()
    finally:
        if os.path.exists(log_file):
            os.unlink(log_file)


def test_setup_logging_file_handler_failure():
    logger = logging_config.setup_logging("test_logger_fail", log_file="/nonexistent/directory/test.log")
    # stdout handler survives, no file handler
    assert len(logger.handlers) >= 1
    assert not any(isinstance(h, logging.FileHandler) for h in logger.handlers)
    logger.handlers.clear()


def test_setup_logging_does_not_reconfigure():
    logger1 = logging_config.setup_logging("test_logger_dup")
    initial_handlers = len(logger1.handlers)
    logger2 = logging_config.setup_logging("test_logger_dup")
    assert len(logger2.handlers) == initial_handlers
    assert logger1 is logger2
    logger1.handlers.clear()


def test_package_modules_log_under_package_logger():
    from comb_reshaper import propagation
    assert propagation.logger.name.startswith(logging_config.PACKAGE_LOGGER + ".")



def test_library_modules_attach_no_handlers():
    from comb_reshaper import artifacts, config, experiment, metrics, optimizer, propagation, waveform
    for module in (artifacts, config, experiment, metrics, optimizer, propagation, waveform):
        assert module.logger.name == module.__name__
        assert module.logger.handlers == []


def test_setup_logging_custom_format():
    logger = logging_config.setup_logging("test_logger_fmt", format_string="%(levelname)s - %(message)s")
    handler = logger.handlers[0]
    handler.stream = io.StringIO()
    logger.info("Test message")
    output = handler.stream.getvalue()
    assert "INFO - Test message" in output
    assert output.count(" - ") == 1
    logger.handlers.clear()


def test_setup_logging_custom_date_format():
    logger = logging_config.setup_logging("test_logger_datefmt", date_format="%H:%M:%S")
    handler = logger.handlers[0]
    handler.stream = io.StringIO()
    logger.info("Test message")
    output = handler.stream.getvalue()
    assert re.search(r'^\d{2}:\d{2}:\d{2}', output), output
    assert not re.search(r'\d{4}-\d{2}-\d{2}', output), output
    logger.handlers.clear()


def test_logging_output_to_file(tmp_path):
    log_file = tmp_path / "run.log"
    logger = logging_config.setup_logging("test_file_output", log_file=str(log_file))
    logger.info("Test message")
    for handler in logger.handlers:
        handler.flush()
    content = log_file.read_text()
    assert "Test message" in content
    assert "INFO" in content
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
