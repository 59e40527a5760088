import os

import pytest

from overshoot_lab import Laplace, LatticePmf, SymmetricPareto

# keep thread count (and therefore nothing observable) fixed during tests
os.environ.setdefault("OVERSHOOT_LAB_THREADS", "1")


@pytest.fixture
def unit_walk():
    return LatticePmf([-1, 1], ["0.5", "0.5"])


@pytest.fixture
def uniform4():
    return LatticePmf([-2, -1, 1, 2], ["0.25"] * 4)


@pytest.fixture
def asym3():
    return LatticePmf([-3, 1, 3], ["1/3", "1/2", "1/6"])


@pytest.fixture
def laplace():
    return Laplace(1.0)


@pytest.fixture
def pareto():
    return SymmetricPareto(1.5)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs (acceptance scale)")
