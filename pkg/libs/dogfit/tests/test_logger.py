import logging

import pytest

from dogfit.logger import LogLevel, configure_logging, resolve_level


@pytest.mark.parametrize(
    "value,expected",
    [
        (None, logging.INFO),
        ("debug", logging.DEBUG),
        ("WARNING", logging.WARNING),
        ("0", logging.WARNING),
        (1, logging.INFO),
        (LogLevel.VERBOSE, logging.DEBUG),
        (logging.ERROR, logging.ERROR),
        ("loud", logging.INFO),
    ],
)
def test_resolve_level(value, expected):
    assert resolve_level(value) == expected


def test_explicit_level_beats_environment(monkeypatch):
    monkeypatch.setenv("DOGFIT_LOG", "debug")
    assert configure_logging("error") == logging.ERROR
    assert logging.getLogger("dogfit").level == logging.ERROR
    assert configure_logging() == logging.DEBUG
    configure_logging("info")
