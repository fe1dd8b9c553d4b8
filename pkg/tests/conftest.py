import numpy as np
import pytest

from xdiff import models
from xdiff.solver import SolverConfig, profile_field


@pytest.fixture(scope="session")
def catalog():
    return models.catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def interior_points(n, count, seed=0, margin=1e-3):
    """Augmented compositions with every entry at least ``margin``."""
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(np.ones(n + 1), size=count)
    return margin + (1 - (n + 1) * margin) * x


def small_run(model, cells=16, T=0.02, tau=1e-3, eps=1e-6, amplitude=0.1, profile="cosine"):
    cfg = SolverConfig(tau=tau, T=T, eps=eps, cells=cells)
    return profile_field(model.n, cells, 1.0, profile, amplitude), cfg
