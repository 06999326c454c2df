import numpy as np
import pytest

from crupwind.mesh import build_structured_cube


@pytest.fixture(scope="session")
def cube1():
    return build_structured_cube(1)


@pytest.fixture(scope="session")
def cube2():
    return build_structured_cube(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
