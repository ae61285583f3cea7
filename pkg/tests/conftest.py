import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finslap.grid import build_grid
from finslap.norms import FinslerNorm

settings.register_profile("finslap", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("finslap")

NORMS = {
    "euclidean": FinslerNorm.euclidean(),
    "t4": FinslerNorm.t_norm(4),
    "quartic": FinslerNorm.quartic(1, 1),
}


@pytest.fixture
def unit_line():
    return build_grid(1, [(0, 1)], 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, seed=0, scale=1.0):
    r = np.random.default_rng(seed)
    return grid.zero_boundary(scale * r.standard_normal(grid.n_nodes))
