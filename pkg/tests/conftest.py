import numpy as np
import pytest
from hypothesis import settings

from apafa.model import Dataset, Hyperparameters
from apafa.priors import sample_prior_state

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def small_design(n, S):
    X = np.zeros((n, S))
    X[np.arange(n), np.arange(n) % S] = 1.0
    return X


@pytest.fixture
def small_problem():
    """A prior state plus data drawn from it (n=6, p=3, S=2)."""
    rng = np.random.default_rng(11)
    hyper = Hyperparameters().resolved(3)
    X = small_design(6, 2)
    state = sample_prior_state(hyper, 6, 3, 2, rng, X=X, d=3, k=3)
    # first two columns of each block active, last one the buffer
    state.c_eta = np.array([2, 2, 2])
    state.tau_eta = np.array([1.0, 1.0, hyper.spike_value])
    state.c_phi = np.array([2, 2, 2])
    state.tau_phi = np.array([1.0, 1.0, 0.0])
    Y = state.mean() + rng.standard_normal((6, 3)) * np.sqrt(state.sigma2)
    return hyper, Dataset(Y=Y, X=X), state
