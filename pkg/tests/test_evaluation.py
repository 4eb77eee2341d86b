import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from apafa.evaluation import (NO_POSITIVE_CLASS, SummaryAccumulator, aggregate_rows,
                              auc_trapezoid, correlation_recovery,
                              evaluate_covariance_recovery, imputation_mse,
                              offdiagonal_correlation, pooled_covariance,
                              posterior_summary, psi_recovery_roc, roc_curve,
                              rv_coefficient)
from apafa.model import PosteriorDraws, SyntheticTruth


# -------------------------------------------------------------------- RV

def test_rv_hand_example():
    assert rv_coefficient(np.eye(2), np.diag([1.0, 0.0])) == pytest.approx(
        1 / np.sqrt(2), abs=1e-4)


def test_rv_rejects_bad_input():
    with pytest.raises(ValueError):
        rv_coefficient(np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        rv_coefficient(np.eye(2), np.eye(3))


@given(st.integers(1, 5), st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_rv_properties(p, seed, scale):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((p, p)), rng.standard_normal((p, p))
    E, T = A @ A.T + 0.1 * np.eye(p), B @ B.T + 0.1 * np.eye(p)
    rv = rv_coefficient(E, T)
    assert 0 <= rv <= 1 + 1e-12
    assert rv_coefficient(E, E) == pytest.approx(1.0)
    assert rv_coefficient(scale * E, T) == pytest.approx(rv)
    assert rv_coefficient(T, E) == pytest.approx(rv)


# -------------------------------------------------------------------- ROC

def test_auc_matches_mann_whitney():
    rng = np.random.default_rng(0)
    labels = rng.random(300) < 0.3
    scores = np.round(rng.random(300) + 0.4 * labels, 2)  # ties on purpose
    fpr, tpr, _ = roc_curve(scores, labels)
    u = stats.mannwhitneyu(scores[labels], scores[~labels]).statistic
    assert auc_trapezoid(fpr, tpr) == pytest.approx(
        u / (labels.sum() * (~labels).sum()), abs=1e-12)


def test_random_scores_give_half():
    rng = np.random.default_rng(1)
    aucs = []
    for _ in range(200):
        labels = rng.random(100) < 0.5
        fpr, tpr, _ = roc_curve(rng.random(100), labels)
        aucs.append(auc_trapezoid(fpr, tpr))
    assert abs(np.mean(aucs) - 0.5) < 0.02


def test_roc_endpoints():
    fpr, tpr, thr = roc_curve([0.9, 0.2, 0.6], [1, 0, 1])
    assert (fpr[0], tpr[0]) == (0.0, 0.0) and (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert np.isinf(thr[0])


def _truth(Psi, groups=None):
    n, k = Psi.shape
    p = 3
    rng = np.random.default_rng(2)
    groups = np.zeros(n, int) if groups is None else groups
    return SyntheticTruth(rng.standard_normal((p, 1)), rng.standard_normal((p, k)),
                          Psi, np.ones(p), groups)


def _states_with_activation(small_problem, acts):
    _, _, state = small_problem
    out = []
    for a in acts:
        s = state.copy()
        s.Psi = a.copy()
        s.tau_phi = np.ones(s.k)
        s.c_phi = np.full(s.k, s.k - 1)
        out.append(s)
    return out


def test_roc_aligns_permuted_columns(small_problem):
    Psi = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [1, 0], [0, 1]], dtype=float)
    est = np.column_stack([np.zeros(6), Psi[:, 1], Psi[:, 0]])
    states = _states_with_activation(small_problem, [est])
    res = psi_recovery_roc(PosteriorDraws(states=states), _truth(Psi))
    assert res.auc == pytest.approx(1.0)
    unaligned = psi_recovery_roc(PosteriorDraws(states=states), _truth(Psi),
                                 aligned=False)
    assert unaligned.auc < 1.0


def test_no_positive_class(small_problem):
    states = _states_with_activation(small_problem, [np.zeros((6, 3))])
    res = psi_recovery_roc(PosteriorDraws(states=states), _truth(np.zeros((6, 0))))
    assert res.auc == NO_POSITIVE_CLASS


# ------------------------------------------------------ covariance recovery

def test_truth_scores_perfectly_against_itself(small_problem):
    _, _, state = small_problem
    groups = np.array([0, 0, 0, 1, 1, 1])
    truth = SyntheticTruth(state.Lambda, state.Gamma, state.activation,
                           state.sigma2, groups)
    out = evaluate_covariance_recovery([state], truth)
    np.testing.assert_allclose(out["rv_omega"], 1.0)
    assert out["rv_shared"] == pytest.approx(1.0)


def test_offdiagonal_correlation_ignores_scale():
    S = np.array([[4.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(offdiagonal_correlation(S), [[0, 0.5], [0.5, 0]])
    D = np.diag([3.0, 0.2])
    np.testing.assert_allclose(offdiagonal_correlation(D @ S @ D),
                               offdiagonal_correlation(S))


def test_pooled_covariance_averages_groups():
    rng = np.random.default_rng(3)
    L, G = rng.standard_normal((3, 1)), rng.standard_normal((3, 2))
    act = np.array([[1, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    units = [L @ L.T + (G * a) @ G.T + np.eye(3) for a in act]
    np.testing.assert_allclose(pooled_covariance(L, G, act, np.ones(3)),
                               np.mean(units, axis=0))


def test_correlation_recovery_of_truth(small_problem):
    _, _, state = small_problem
    truth = SyntheticTruth(state.Lambda, state.Gamma, state.activation,
                           state.sigma2, np.zeros(6, int))
    # a rescaled noise level changes the covariance but barely the structure
    other = state.copy()
    other.sigma2 = state.sigma2 * 1.01
    assert correlation_recovery([state], truth) == pytest.approx(1.0)
    assert correlation_recovery([other], truth) > 0.99


# ---------------------------------------------------------------- summaries

def test_streaming_matches_batch(small_problem):
    from apafa.gibbs import ChainConfig, run_chain
    _, ds, _ = small_problem
    draws = run_chain(ds, cfg=ChainConfig(iterations=40, burn_in=10, seed=4))
    batch = posterior_summary(draws)
    acc = SummaryAccumulator()
    for s in draws.states:
        acc.add(s)
    stream = acc.result()
    assert stream["draws"] == batch["draws"] == 30
    np.testing.assert_allclose(stream["psi_mean"], batch["psi_mean"])
    # independent recomputation of the simple summaries
    d, k = draws.derived.T
    assert batch["d_mean"] == pytest.approx(d.mean())
    assert batch["k_iqr"] == pytest.approx(np.subtract(*np.percentile(k, [75, 25])))
    kmax = max(s.k for s in draws.states)
    padded = [np.pad(s.activation, ((0, 0), (0, kmax - s.k))) for s in draws.states]
    np.testing.assert_allclose(batch["psi_mean"], np.mean(padded, axis=0))


def test_summary_aligns_sign_flips(small_problem):
    _, _, state = small_problem
    flipped = state.copy()
    flipped.Lambda = -state.Lambda[:, ::-1]
    out = posterior_summary([state, flipped])
    np.testing.assert_allclose(out["lambda_mean"], state.Lambda, atol=1e-12)


def test_empty_summary():
    assert posterior_summary([]) == {"draws": 0}


# ---------------------------------------------------------------- imputation

def test_imputation_mse():
    draws = np.array([[1.0, 2.0], [3.0, 2.0]])
    assert imputation_mse(draws, [2.0, 0.0]) == pytest.approx(2.0)
    assert imputation_mse(np.array([2.0, 2.0]), [2.0, 0.0]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        imputation_mse(draws, [1.0])


def test_aggregate_rows():
    rows = [{"scenario": "A", "shape": "tall", "d": d, "k": 1.0, "auc": a}
            for d, a in ((2.0, 0.9), (4.0, NO_POSITIVE_CLASS), (3.0, 0.7))]
    (agg,) = aggregate_rows(rows)
    assert agg["n_replicates"] == 3
    assert agg["d_mean"] == 3.0 and agg["d_median"] == 3.0
    assert agg["auc_mean"] == pytest.approx(0.8)
    (none,) = aggregate_rows([{"scenario": "B", "shape": "tall",
                               "auc": NO_POSITIVE_CLASS}])
    assert none["auc_mean"] == NO_POSITIVE_CLASS
