import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance tests append (criterion, passed, detail) here; the summary below
# prints one line per criterion at the end of the run.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
