"""Shared test plumbing: acceptance-criterion recording with a terminal
summary printing one pass/fail line per criterion."""

import pytest

_RESULTS = {}
_FIXTURE_SECONDS = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Record (number, description, passed) for the summary section."""

    def _record(number, description, passed):
        _RESULTS[number] = (description, bool(passed))

    return _record


@pytest.fixture(scope="session")
def fixture_seconds():
    """Wall-clock build cost of shared ensembles, keyed by fixture name.

    Criterion budgets charge the full build cost of every fixture the
    criterion consumes, as if it had been run standalone."""
    return _FIXTURE_SECONDS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        description, ok = _RESULTS[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE criterion {number}: {verdict} - {description}")
