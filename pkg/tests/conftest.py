import numpy as np
import pytest

from pglab.field import Torus
from pglab.harness import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture(scope="session")
def torus2():
    return Torus(2, 2.0 * np.pi, 32)


@pytest.fixture(scope="session")
def torus3():
    return Torus(3, 2.0 * np.pi, 16)


def pytest_configure(config):
    # collected by the acceptance tests, printed once at the end of the run
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
