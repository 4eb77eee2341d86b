"""Identifiability checks for the specific part of the model.

Covers the rank condition that rules out information switching, the
linear system that pins down the activation patterns, the distinct-column
condition on the pattern matrix, the truncation and prior bounds, and
column alignment (permutation plus sign) used to compare estimates.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class RankCheck:
    holds: bool
    rank: int
    bound: int


@dataclass(frozen=True)
class PatternCheck:
    holds: bool
    duplicate_pairs: list


@dataclass(frozen=True)
class SwitchResistance:
    unique: bool
    residual: float
    solution: np.ndarray


@dataclass(frozen=True)
class AlignmentResult:
    """``estimate[:, permutation] * signs`` lines up with ``reference``.

    Position ``j`` of ``permutation`` holds the estimate column matched to
    reference column ``reference_index[j]``; estimate columns left without
    a partner come last, in their original order, with reference index -1.
    """

    permutation: np.ndarray
    signs: np.ndarray
    score: float
    reference_index: np.ndarray = None

    def apply(self, estimate):
        return np.asarray(estimate)[:, self.permutation] * self.signs


def numerical_rank(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    tol = max(A.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    return int(np.sum(sv > tol))


def check_rank_condition(Gamma):
    """Full column rank and ``k < p(p+1)/2``."""
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    p, k = Gamma.shape
    bound = p * (p + 1) // 2
    rank = numerical_rank(Gamma)
    return RankCheck(holds=bool(rank == k and k < bound), rank=rank, bound=bound)


def check_nrspc(Psi_star):
    """All columns of the distinct-pattern matrix must differ."""
    Psi_star = np.atleast_2d(np.asarray(Psi_star))
    k = Psi_star.shape[1]
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)
             if np.array_equal(Psi_star[:, a], Psi_star[:, b])]
    return PatternCheck(holds=not pairs, duplicate_pairs=pairs)


def half_vec_design(Gamma):
    """Rows indexed by pairs j <= l, entries ``gamma_jh * gamma_lh``."""
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    j, l = np.triu_indices(Gamma.shape[0])
    return Gamma[j] * Gamma[l]


def half_vec(M):
    j, l = np.triu_indices(M.shape[0])
    return M[j, l]


def verify_switch_resistance(Gamma, Psi_star, tol=1e-8):
    """Solve for the activation patterns from the specific covariances.

    For each distinct pattern ``psi_s`` the upper triangle of
    ``W_s = Gamma diag(psi_s) Gamma^T`` is linear in ``psi_s``; the patterns
    are recovered uniquely when the per-pattern design has rank ``k``.
    ``unique`` also requires the recovered patterns to match within ``tol``.
    """
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    Psi_star = np.atleast_2d(np.asarray(Psi_star, dtype=float))
    G = half_vec_design(Gamma)
    k = Gamma.shape[1]
    W = np.stack([half_vec((Gamma * row) @ Gamma.T) for row in Psi_star], axis=1)
    solution, *_ = np.linalg.lstsq(G, W, rcond=None)
    residual = float(np.max(np.abs(G @ solution - W))) if W.size else 0.0
    full_rank = numerical_rank(G) == k
    recovered = full_rank and np.allclose(solution.T, Psi_star, atol=tol, rtol=0)
    return SwitchResistance(unique=bool(full_rank and residual < tol and recovered),
                            residual=residual, solution=solution.T)


def detect_information_switching(draws, threshold=0.9):
    """Specific columns whose posterior activation is high for every unit.

    Column ``h`` is flagged when the smallest (over units) posterior mean of
    the effective activation exceeds ``threshold``. Only draws with the most
    common column count are used.
    """
    states = list(getattr(draws, "states", draws))
    if not states:
        return []
    ks = [s.k for s in states]
    k = max(set(ks), key=ks.count)
    acts = np.mean([s.activation for s in states if s.k == k], axis=0)
    if acts.size == 0:
        return []
    return [int(h) for h in np.flatnonzero(acts.min(axis=0) > threshold)]


def truncation_bound(p):
    """Largest number of specific columns, ``p(p+1)/2 - 1``."""
    return p * (p + 1) // 2 - 1


def switching_prior_bound(alpha_phi, p):
    """Upper bound ``alpha_phi / (p(p+1)/2)`` on the prior probability of
    more specific columns than the identifiable maximum, clamped to [0, 1].

    Returned as an exact :class:`fractions.Fraction` when ``alpha_phi`` is
    rational.
    """
    value = Fraction(alpha_phi).limit_denominator(10**12) / Fraction(p * (p + 1), 2)
    return min(max(value, Fraction(0)), Fraction(1))


def _similarity(estimate, reference, kind):
    E = np.asarray(estimate, dtype=float)
    R = np.asarray(reference, dtype=float)
    if kind == "correlation":
        E = E - E.mean(axis=0)
        R = R - R.mean(axis=0)
    en = np.linalg.norm(E, axis=0)
    rn = np.linalg.norm(R, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = (E.T @ R) / np.outer(en, rn)
    return np.nan_to_num(sim, nan=0.0, posinf=0.0, neginf=0.0)


def align_factor_columns(estimate, reference, kind="correlation", signed=True):
    """Match estimate columns to reference columns.

    Solves a maximum-weight assignment with weights ``|similarity|``
    (``kind`` is "correlation" for factor scores or "cosine" for
    loadings), then flips signs so matched similarities are positive. With
    ``signed=False`` the weights are the positive part of the similarity
    and no flips are made. Zero-variance columns get weight 0. The score is
    the sum of matched weights.
    """
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if estimate.shape[0] != reference.shape[0]:
        raise ValueError("estimate and reference need the same number of rows")
    k_est, k_ref = estimate.shape[1], reference.shape[1]
    sim = _similarity(estimate, reference, kind)
    weight = np.abs(sim) if signed else np.clip(sim, 0.0, None)
    if sim.size:
        rows, cols = linear_sum_assignment(weight, maximize=True)
    else:
        rows, cols = np.zeros(0, int), np.zeros(0, int)
    order = np.argsort(cols)
    rows, cols = rows[order], cols[order]
    leftover = [c for c in range(k_est) if c not in set(rows.tolist())]
    perm = np.concatenate([rows, leftover]).astype(int)
    matched_to = np.concatenate([cols, np.full(len(leftover), -1)]).astype(int)
    signs = np.ones(k_est)
    score = 0.0
    for pos, (e, j) in enumerate(zip(rows, cols)):
        score += weight[e, j]
        if signed and sim[e, j] < 0:
            signs[pos] = -1.0
    return AlignmentResult(permutation=perm, signs=signs, score=float(score),
                           reference_index=matched_to)
