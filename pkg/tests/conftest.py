import numpy as np
import pytest

import acceptance_log
from tndp import CityGraph, ProblemParams, load_preset


@pytest.fixture(scope="session")
def mandl():
    return load_preset("mandl")


def chain_city(n=4, tau=60.0, demand=None):
    """Path graph 0-1-...-(n-1) with uniform edge time."""
    times = np.full((n, n), np.inf)
    np.fill_diagonal(times, 0.0)
    for i in range(n - 1):
        times[i, i + 1] = times[i + 1, i] = tau
    if demand is None:
        demand = np.ones((n, n)) - np.eye(n)
    return CityGraph(times, np.asarray(demand, dtype=float))


@pytest.fixture
def chain4():
    return chain_city(4)


@pytest.fixture
def small_params():
    return ProblemParams(n_routes=2, min_stops=2, max_stops=4)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.RESULTS:
        terminalreporter.write_line(line)
