import math

import pytest

from stsync import table1_path
from stsync.scenario import load_scenario
from stsync.sim import run_formation


@pytest.fixture(scope="session")
def table1():
    return load_scenario(table1_path())


@pytest.fixture(scope="session")
def formation(table1):
    """Disturbance-free four-vehicle run on the bundled scenario."""
    return run_formation(table1.vehicles, table1.target, table1.control)


def deg(x):
    return math.radians(x)


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion(request):
    """Record one summary line per acceptance criterion (printed at the end)."""

    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
