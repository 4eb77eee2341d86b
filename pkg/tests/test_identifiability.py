from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apafa.identifiability import (align_factor_columns, check_nrspc,
                                   check_rank_condition, detect_information_switching,
                                   half_vec, half_vec_design, switching_prior_bound,
                                   truncation_bound, verify_switch_resistance)
from apafa.model import assemble_marginal_covariance


def _specific_cov(Gamma, psi):
    return (Gamma * psi) @ Gamma.T


# ------------------------------------------------------------ bounds

def test_exact_bounds():
    assert truncation_bound(10) == 54
    assert switching_prior_bound(4, 63) == Fraction(4, 2016)


def test_prior_bound_is_clamped():
    assert switching_prior_bound(100, 2) == 1
    assert switching_prior_bound(0, 5) == 0


# -------------------------------------------------------- rank condition

def test_rank_condition_cases():
    rng = np.random.default_rng(0)
    assert check_rank_condition(rng.standard_normal((5, 3))).holds
    G = rng.standard_normal((5, 3))
    G[:, 2] = G[:, 0] + G[:, 1]
    assert not check_rank_condition(G).holds
    # k = p(p+1)/2 breaks the bound even at full rank in half-vec space
    assert not check_rank_condition(rng.standard_normal((2, 3))).holds


def test_half_vec_design_reproduces_covariance():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((4, 3))
    psi = np.array([1.0, 0.0, 1.0])
    np.testing.assert_allclose(half_vec_design(G) @ psi,
                               half_vec(_specific_cov(G, psi)), atol=1e-12)


def test_switching_witness_when_rank_fails():
    # two identical columns: switching one unit from column 0 to column 1
    # leaves every covariance unchanged, so the patterns are not identified
    g = np.array([1.0, -0.5, 2.0])
    G = np.column_stack([g, g])
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    np.testing.assert_allclose(_specific_cov(G, a), _specific_cov(G, b))
    assert not check_rank_condition(G).holds
    assert not verify_switch_resistance(G, np.array([a, b])).unique


def test_no_switching_when_rank_holds():
    rng = np.random.default_rng(2)
    G = rng.standard_normal((4, 2))
    patterns = np.array([[1, 0], [0, 1], [1, 1]], dtype=float)
    assert check_rank_condition(G).holds
    res = verify_switch_resistance(G, patterns)
    assert res.unique and res.residual < 1e-10
    np.testing.assert_allclose(res.solution, patterns, atol=1e-10)
    # and different patterns give different covariances
    covs = [_specific_cov(G, s) for s in patterns]
    assert not np.allclose(covs[0], covs[1]) and not np.allclose(covs[0], covs[2])


def test_random_switch_resistance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = rng.integers(3, 8)
        k = rng.integers(1, min(4, p) + 1)
        G = rng.standard_normal((p, k))
        patterns = np.unique((rng.random((6, k)) < 0.5).astype(float), axis=0)
        assert verify_switch_resistance(G, patterns).unique


def test_always_on_column_mimics_shared_factor():
    rng = np.random.default_rng(4)
    L, g = rng.standard_normal((4, 1)), rng.standard_normal((4, 1))
    s2 = np.ones(4)
    as_specific = assemble_marginal_covariance(L, g, np.ones(1), s2)
    as_shared = assemble_marginal_covariance(np.hstack([L, g]), g, np.zeros(1), s2)
    np.testing.assert_allclose(as_specific, as_shared, atol=1e-12)


def test_detect_information_switching(small_problem):
    _, _, state = small_problem
    s = state.copy()
    s.Psi[:, 0] = 1.0
    s.Psi[:, 1] = [1, 0, 1, 0, 1, 0]
    assert detect_information_switching([s, s.copy()]) == [0]
    assert detect_information_switching([]) == []


def test_nrspc():
    assert check_nrspc(np.array([[1, 0], [0, 1]])).holds
    res = check_nrspc(np.array([[1, 1, 0], [0, 0, 1]]))
    assert not res.holds and res.duplicate_pairs == [(0, 1)]


# ------------------------------------------------------------- alignment

def test_alignment_recovers_permutation_and_signs():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(100):
        n, k = 80, 4
        ref = rng.standard_normal((n, k))
        perm = rng.permutation(k)
        signs = rng.choice([-1.0, 1.0], size=k)
        est = ref[:, perm] * signs + 0.3 * rng.standard_normal((n, k))
        res = align_factor_columns(est, ref)
        aligned = res.apply(est)
        if np.all(np.sum(aligned * ref, axis=0) > 0) and np.array_equal(
                perm[res.permutation], np.arange(k)):
            hits += 1
    assert hits >= 95


def test_alignment_with_extra_columns():
    rng = np.random.default_rng(6)
    ref = rng.standard_normal((50, 2))
    est = np.column_stack([rng.standard_normal(50), -ref[:, 1], ref[:, 0]])
    res = align_factor_columns(est, ref)
    np.testing.assert_array_equal(res.permutation, [2, 1, 0])
    np.testing.assert_array_equal(res.signs, [1, -1, 1])
    np.testing.assert_array_equal(res.reference_index, [0, 1, -1])


def test_zero_variance_column_gets_no_weight():
    ref = np.column_stack([np.arange(5.0), np.ones(5)])
    res = align_factor_columns(ref.copy(), ref)
    assert res.score == pytest.approx(1.0)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_alignment_is_a_permutation(k, seed):
    rng = np.random.default_rng(seed)
    est, ref = rng.standard_normal((20, k)), rng.standard_normal((20, k))
    res = align_factor_columns(est, ref)
    assert sorted(res.permutation) == list(range(k))
    assert set(res.signs) <= {-1.0, 1.0}
