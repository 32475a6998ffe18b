"""Prints the acceptance-criterion PASS/FAIL lines after the test run.

The acceptance tests record one line per numbered criterion; emitting them
from a terminal-summary hook keeps them visible under pytest's default
output capture.
"""

import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
