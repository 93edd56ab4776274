import numpy as np
import pytest

from bcpo.data import count_statistics
from bcpo.gridworld import GridSpec, build_mdp, gridworld_dataset, make_behavior_policy


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def grid_spec():
    return GridSpec()


@pytest.fixture(scope="session")
def grid_mdp(grid_spec):
    return build_mdp(grid_spec)


@pytest.fixture(scope="session")
def grid_dataset(grid_spec, grid_mdp):
    behavior = make_behavior_policy(grid_mdp, grid_spec, 0.5)
    return gridworld_dataset(grid_spec, behavior, 15_000, seed=0, mdp=grid_mdp)


@pytest.fixture(scope="session")
def grid_counts(grid_dataset):
    return count_statistics(grid_dataset)
