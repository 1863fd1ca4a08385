"""Shared pytest plumbing.

The acceptance tests (tests/test_acceptance.py) register one summary
line each via the `record_property` fixture; the terminal-summary hook
below prints them as a compact PASS/FAIL table at the end of the run.
"""

import pytest

_ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    detail = ""
    for key, value in report.user_properties:
        if key == "detail":
            detail = str(value)
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome, detail = _ACCEPTANCE_RESULTS[name]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome,
                                                          outcome.upper())
        line = f"{name}: {status}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
