"""Shared fixtures: stock bearing scenarios on moderate grids."""

import numpy as np
import pytest

from obsmhe import TimeGrid, bearing


@pytest.fixture(scope="session")
def x0():
    return np.array([1.0, 0.0])


@pytest.fixture(scope="session")
def circ():
    """(system, input) for the unit-circle scenario around the origin."""
    sys_, _, u, _ = bearing.preset_scenario("circ-default")
    return sys_, u


@pytest.fixture(scope="session")
def cst():
    sys_, _, u, _ = bearing.preset_scenario("cst-default")
    return sys_, u


@pytest.fixture(scope="session")
def spi():
    sys_, _, u, _ = bearing.preset_scenario("spi-default")
    return sys_, u


@pytest.fixture()
def grid6():
    """[0, 6] at the default production step."""
    return TimeGrid.with_step(0.0, 6.0, 0.0025)


@pytest.fixture()
def grid2():
    """[0, 2] with a coarser step for cheap unit tests."""
    return TimeGrid.with_step(0.0, 2.0, 0.005)
