"""Shared pytest configuration.

Tests marked ``@pytest.mark.acceptance(criterion=N, summary=...)`` feed a
per-criterion PASS/FAIL digest printed after the run.  Several tests may
share a criterion number; the criterion passes only if all of them do.
"""

from __future__ import annotations

import pytest

# criterion id -> (summary, passed so far)
_acceptance: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(criterion, summary): test gates the numbered "
        "acceptance criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    criterion = marker.kwargs["criterion"]
    summary = marker.kwargs["summary"]
    ok_so_far = _acceptance.get(criterion, (summary, True))[1]
    if report.when == "call":
        _acceptance[criterion] = (summary, ok_so_far and report.passed)
    elif report.failed:  # setup error / fixture failure also fails the gate
        _acceptance[criterion] = (summary, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion in sorted(_acceptance):
        summary, passed = _acceptance[criterion]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {criterion:2d}. {summary}")
