"""Shared fixtures plus the acceptance summary printed after the run."""

import pytest

ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def record():
    """Log one acceptance criterion outcome; returns the boolean so tests
    can assert on it in the same line."""

    def _record(number, label, ok, detail=""):
        ACCEPTANCE_RESULTS[number] = (label, bool(ok), detail)
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        label, ok, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number} [{status}] {label}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
