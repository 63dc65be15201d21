"""Shared fixtures and the acceptance summary printed at the end of a run."""
import numpy as np
import pytest

ACCEPTANCE_LINES = {}


def record(criterion, name, passed, detail=""):
    """Remember one acceptance outcome; printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] criterion {criterion} {name}"
    if detail:
        line += f": {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=str):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
