import numpy as np
import pytest

from mhdlab.basic_state import make_planar_state
from mhdlab.eos import EosParams
from mhdlab.plasma import InterfaceGeometry, PlasmaState


@pytest.fixture
def eos():
    return EosParams()


@pytest.fixture
def planar():
    """Reference planar state: orthogonal tangential fields, tangential flow."""
    return make_planar_state((0, 1, 0), (0, 0, 1), (0, 0.3, 0.2), 2.0)


def random_plasma_state(rng):
    H = rng.normal(0, 1, 3)
    p = rng.uniform(0.5, 2.0)
    return PlasmaState(p + 0.5 * H @ H, rng.normal(0, 0.5, 3), H, rng.uniform(-0.5, 0.5))


def random_geometry(rng, flat_jacobian=False):
    g = rng.uniform(-0.5, 0.5, 3)
    return InterfaceGeometry(g[0], g[1], g[2], 1.0 if flat_jacobian else rng.uniform(0.5, 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report_line(line):
    """Record one acceptance verdict; echoed again in the terminal summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
