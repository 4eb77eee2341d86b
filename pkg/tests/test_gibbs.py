import numpy as np
import pytest

from apafa.gibbs import (SWEEP_ORDER, ChainConfig, _resize_plan, adapt_truncation,
                         gibbs_sweep, impute_missing, initial_state, run_chain)
from apafa.model import (Dataset, Hyperparameters, NumericFailure,
                         conditional_log_likelihood, validate_state)
from apafa.priors import sample_outcomes, sample_prior_state

from conftest import small_design


def _dataset(n=20, p=5, S=2, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    X = small_design(n, S)
    state = sample_prior_state(Hyperparameters(), n, p, S, rng, X=X, d=2, k=2,
                               binary=binary)
    Y, _ = sample_outcomes(state, rng, binary=binary)
    return Dataset(Y=Y, X=X, outcome_kind="binary" if binary else "continuous")


SHORT = ChainConfig(iterations=200, burn_in=100, seed=3)


# ------------------------------------------------------------------ config

def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(thinning=0)
    with pytest.raises(ValueError):
        ChainConfig(beta_update="slice")


def test_adaptation_window_defaults_to_burn_in():
    assert ChainConfig(iterations=50, burn_in=30).adapt_end == 30
    assert ChainConfig(iterations=50, burn_in=30).n_saved == 20


# -------------------------------------------------------------- adaptation

def test_resize_plan_rules():
    assert _resize_plan(np.array([1, 0, 0, 0], bool), 10) == ("drop", 2)
    assert _resize_plan(np.array([1, 1, 0], bool), 10) == ("grow", 4)
    assert _resize_plan(np.array([1, 1, 0], bool), 3) == (None, 3)
    assert _resize_plan(np.array([0, 0, 0], bool), 10) == ("drop", 1)


def _adapt_problem(small_problem, k_active):
    hyper, ds, state = small_problem
    # the shared block sits at its cap so only the specific block moves
    hyper = Hyperparameters(k_max=5, d_max=3).resolved(ds.p)
    k = state.k
    state.c_phi = np.full(k, k_active)
    state.tau_phi = (np.arange(k) < k_active).astype(float)
    return hyper, ds, state


def test_drop_keeps_likelihood(small_problem):
    hyper, ds, state = _adapt_problem(small_problem, 0)
    before = conditional_log_likelihood(ds, state)
    adapt_truncation(state, 0, SHORT, hyper, ds, np.random.default_rng(0), force=True)
    assert state.k == 1
    assert validate_state(state) == []
    assert conditional_log_likelihood(ds, state) == pytest.approx(before, rel=1e-12)


def test_grow_adds_inactive_column(small_problem):
    hyper, ds, state = _adapt_problem(small_problem, 2)
    before = conditional_log_likelihood(ds, state)
    adapt_truncation(state, 0, SHORT, hyper, ds, np.random.default_rng(0), force=True)
    assert state.k == 4 and state.tau_phi[-1] == 0 and state.v_phi[-1] == 1
    assert validate_state(state) == []
    assert conditional_log_likelihood(ds, state) == pytest.approx(before, rel=1e-12)


def test_growth_stops_at_cap(small_problem):
    hyper, ds, state = _adapt_problem(small_problem, 2)
    hyper = Hyperparameters(k_max=3, d_max=3).resolved(ds.p)
    adapt_truncation(state, 0, SHORT, hyper, ds, np.random.default_rng(0), force=True)
    assert state.k == 3


def test_adaptation_only_inside_window(small_problem):
    hyper, ds, state = _adapt_problem(small_problem, 0)
    always = Hyperparameters(adapt_a0=0.0, adapt_a1=0.0).resolved(ds.p)
    cfg = ChainConfig(iterations=400, burn_in=300, adapt_start=200)
    rng = np.random.default_rng(0)
    assert not adapt_truncation(state.copy(), 100, cfg, always, ds, rng)
    assert not adapt_truncation(state.copy(), 301, cfg, always, ds, rng)
    assert adapt_truncation(state.copy(), 250, cfg, always, ds, rng)


def test_adaptation_probability_decays(small_problem):
    hyper, ds, state = _adapt_problem(small_problem, 0)
    hyper = Hyperparameters(adapt_a0=0.0, adapt_a1=1e-3).resolved(ds.p)
    cfg = ChainConfig(iterations=5000, burn_in=4000, adapt_start=0)
    rng = np.random.default_rng(1)
    hits = np.mean([adapt_truncation(state.copy(), 1000, cfg, hyper, ds, rng)
                    for _ in range(4000)])
    p = np.exp(-1.0)
    assert abs(hits - p) < 4 * np.sqrt(p * (1 - p) / 4000)


# ----------------------------------------------------------------- chains

def test_smoke_run_keeps_state_valid():
    ds = _dataset()
    seen = []
    draws = run_chain(ds, cfg=SHORT, callback=lambda t, s: seen.append(t))
    assert len(draws) == SHORT.n_saved and seen == list(range(200))
    for state in draws.states[::10]:
        assert validate_state(state, ds) == []
    d, k = draws.derived.T
    assert d.max() <= Hyperparameters().resolved(5).d_max
    assert set(draws.meta["timings"]) <= set(SWEEP_ORDER)


def test_same_seed_same_draws():
    ds = _dataset(n=12, p=4)
    cfg = ChainConfig(iterations=60, burn_in=30, seed=9)
    a, b = run_chain(ds, cfg=cfg), run_chain(ds, cfg=cfg)
    for sa, sb in zip(a.states, b.states):
        for key, value in sa.array_fields().items():
            if value is not None:
                np.testing.assert_array_equal(value, getattr(sb, key))


def test_thinning_spaces_draws():
    ds = _dataset(n=10, p=3)
    draws = run_chain(ds, cfg=ChainConfig(iterations=50, burn_in=20, thinning=5))
    assert len(draws) == 6


def test_random_walk_kernel_runs():
    ds = _dataset(n=10, p=3)
    draws = run_chain(ds, cfg=ChainConfig(iterations=40, burn_in=20,
                                          beta_update="random_walk"))
    assert all(np.isfinite(s.Beta).all() for s in draws.states)


def test_binary_chain_keeps_unit_noise():
    ds = _dataset(n=15, p=3, binary=True)
    draws = run_chain(ds, cfg=ChainConfig(iterations=40, burn_in=20))
    for s in draws.states:
        np.testing.assert_array_equal(s.sigma2, 1.0)
        assert np.all((s.ProbitZ > 0) == (ds.Y == 1))


def test_numeric_failure_names_component():
    ds = _dataset(n=8, p=3)
    hyper = Hyperparameters().resolved(3)
    cfg = ChainConfig(iterations=10, burn_in=5)
    rng = np.random.default_rng(0)
    state = initial_state(ds, hyper, cfg, rng)
    state.Lambda[:] = 10.0
    state.sigma2[:] = -1.0
    with pytest.raises(NumericFailure) as info:
        gibbs_sweep(state, ds, hyper, cfg, rng, iteration=7)
    assert info.value.component == "eta" and info.value.iteration == 7


def test_initial_state_respects_caps():
    ds = _dataset(n=10, p=3)
    hyper = Hyperparameters().resolved(3)
    state = initial_state(ds, hyper, ChainConfig(), np.random.default_rng(0))
    assert state.d == hyper.d_max and state.k == hyper.k_max
    assert validate_state(state, ds) == []


# ---------------------------------------------------------------- missing data

def test_imputation_with_zero_loadings_is_noise(small_problem):
    hyper, ds, state = small_problem
    mask = np.zeros_like(ds.missing_mask)
    mask[:, 1] = True
    masked = Dataset(Y=ds.Y, X=ds.X, missing_mask=mask)
    state.Lambda[:] = 0.0
    state.Gamma[:] = 0.0
    rng = np.random.default_rng(2)
    draws = np.concatenate([impute_missing(state, masked, rng) for _ in range(5000)])
    sd = np.sqrt(state.sigma2[1])
    assert abs(draws.mean()) < 4 * sd / np.sqrt(draws.size)
    assert abs(draws.var() - sd ** 2) < 4 * sd ** 2 * np.sqrt(2 / draws.size)


def test_missing_cells_are_imputed_during_the_chain():
    ds = _dataset(n=16, p=4)
    Y = ds.Y.copy()
    Y[[0, 3, 7], [1, 2, 0]] = np.nan
    masked = Dataset(Y=Y, X=ds.X)
    draws = run_chain(masked, cfg=ChainConfig(iterations=60, burn_in=30))
    imputations = draws.meta["imputations"]
    assert imputations.shape == (30, 3) and np.all(np.isfinite(imputations))
    assert np.ptp(imputations, axis=0).min() > 0
    # observed cells are never overwritten
    for s in draws.states:
        np.testing.assert_array_equal(s.Y_imputed[~masked.missing_mask],
                                      Y[~masked.missing_mask])
