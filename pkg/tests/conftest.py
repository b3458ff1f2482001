import numpy as np
import pytest

from helpers import curved_traj, small_vehicle, straight_traj


@pytest.fixture(scope="session")
def veh():
    return small_vehicle()


@pytest.fixture(scope="session")
def line_traj():
    return straight_traj(distance=10.0, speed=1.0, n_interior=3)


@pytest.fixture(scope="session")
def bend_traj():
    return curved_traj(seed=11, n_interior=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
