import numpy as np
import pytest

from blowlab import radial


@pytest.fixture(scope="session")
def grid():
    """Default profile-scale grid shared across the suite."""
    return radial.make_grid(1e-4, 4e3, 4096)


@pytest.fixture(scope="session")
def fine_grid():
    return radial.make_grid(1e-4, 4e3, 8192)


@pytest.fixture(scope="session")
def eigenpair(grid):
    return radial.unstable_mode(grid)


def l2_window(grid, values, y_hi=100.0):
    mask = grid.nodes <= y_hi
    return float(np.sqrt(np.dot(grid.weights[mask], values[mask] ** 2)))
