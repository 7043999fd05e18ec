"""Shared fixtures: reference layouts and operating programs."""

import numpy as np
import pytest

from junctioncap import Demand, OperatingProgram, make_junction


@pytest.fixture(scope="session")
def single_track():
    """Two fully conflicting routes (one shared track segment)."""
    return make_junction(["r1", "r2"], [("r1", "r2")], name="single_track")


@pytest.fixture(scope="session")
def crossover():
    """Three routes; the middle one crosses both outer ones."""
    return make_junction(["r1", "r2", "r3"], [("r1", "r2"), ("r2", "r3")],
                         name="crossover")


@pytest.fixture(scope="session")
def flat_junction():
    """Double-track junction with the branch crossing the main line at grade."""
    return make_junction(
        ["r1", "r2", "r3", "r4"],
        [("r1", "r2"), ("r2", "r3"), ("r3", "r4")],
        name="flat")


@pytest.fixture(scope="session")
def overpass_junction():
    """Same junction with the branch grade-separated from the far main track."""
    return make_junction(
        ["r1", "r2", "r3", "r4"],
        [("r1", "r2"), ("r3", "r4")],
        name="overpass")


@pytest.fixture(scope="session")
def single_route():
    return make_junction(["r1"], [], name="single_route")


@pytest.fixture(scope="session")
def case_study_program():
    """Local main line (5 trains/h each way on r1, r3) plus a long-distance
    branch (4 trains/h each way on r2, r4); passenger traffic only."""
    return OperatingProgram(demands=(
        Demand(route=0, regional=5),
        Demand(route=1, high_speed=4),
        Demand(route=2, regional=5),
        Demand(route=3, high_speed=4),
    ), horizon=60.0)


def uniform_program(k, per_route=6, horizon=60.0):
    """Program with ``per_route`` regional trains on each of ``k`` routes."""
    return OperatingProgram(
        demands=tuple(Demand(route=i, regional=per_route) for i in range(k)),
        horizon=horizon)


@pytest.fixture(scope="session")
def mu_grid_full():
    return np.round(0.01 + 0.01 * np.arange(100), 10)
