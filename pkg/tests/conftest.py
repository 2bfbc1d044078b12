import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from logconcave.grid import BoxDomain, GridDensity, grid_from_function

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

LINE = BoxDomain((-8.0,), (8.0,))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def tabulate(func, dom=LINE, res=321, cls=GridDensity):
    return grid_from_function(func, dom, res, cls)


def normal_pdf(x, mean=0.0, var=1.0):
    return np.exp(-(x - mean) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)


@pytest.fixture
def std_normal():
    return tabulate(lambda P: normal_pdf(P[..., 0]))


@pytest.fixture
def lebesgue():
    return tabulate(lambda P: np.ones(P.shape[:-1]))


@pytest.fixture
def bimodal():
    return tabulate(lambda P: 0.5 * normal_pdf(P[..., 0], -3, 0.25) + 0.5 * normal_pdf(P[..., 0], 3, 0.25))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
