import numpy as np
import pytest

from tmpc.ballbot import BallbotParams, synthesize
from tmpc.core import Trajectory


@pytest.fixture(scope="session")
def model():
    return synthesize(BallbotParams())


def line(p0, p1, n, dt=0.1):
    """Straight, uniformly sampled path with ``n`` samples."""
    s = np.linspace(0.0, 1.0, n)[:, None]
    return Trajectory(np.asarray(p0, float) + s * (np.asarray(p1, float) - np.asarray(p0, float)), dt)


def still(p, n, dt=0.1):
    return Trajectory(np.tile(np.asarray(p, float), (n, 1)), dt)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
