import numpy as np
import pytest

from toricflow.polytope import cube, interval, simplex
from toricflow.potential import quadratic_potential, zero_potential

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def cp1():
    return zero_potential(interval())


@pytest.fixture
def cp2():
    return zero_potential(simplex(2))


@pytest.fixture
def square():
    return zero_potential(cube(2))


@pytest.fixture
def flat_square():
    return quadratic_potential(cube(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
