"""Ensures the tests directory is importable (for the _oracles helpers)."""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import _acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_log.LINES:
        terminalreporter.write_line(line)
