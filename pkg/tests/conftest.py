import math

import pytest
from hypothesis import HealthCheck, settings

from pstokes.fields import build_grid

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid8():
    return build_grid(3, 8, 2 * math.pi)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(3, 16, 2 * math.pi)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(3, 32, 2 * math.pi)


@pytest.fixture(scope="session")
def grid2d():
    return build_grid(2, 16, 2 * math.pi)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
