"""Metrics for simulated fits: covariance recovery, activation-pattern ROC,
posterior summaries of factor counts, and imputation error."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .identifiability import align_factor_columns
from .model import Hyperparameters, active_factor_counts

NO_POSITIVE_CLASS = "no-positive-class"


def rv_coefficient(E, T):
    """``tr(E^T T) / sqrt(tr(E^T E) tr(T^T T))``."""
    E = np.asarray(E, dtype=float)
    T = np.asarray(T, dtype=float)
    if E.shape != T.shape or E.ndim != 2:
        raise ValueError(f"shape mismatch: {E.shape} vs {T.shape}")
    ee = np.sum(E * E)
    tt = np.sum(T * T)
    if ee == 0 or tt == 0:
        raise ValueError("RV coefficient is undefined for a zero matrix")
    return float(np.sum(E * T) / np.sqrt(ee * tt))


def offdiagonal_correlation(S):
    """Correlation matrix of ``S`` with its diagonal set to zero."""
    S = np.asarray(S, dtype=float)
    sd = np.sqrt(np.diag(S))
    R = S / np.outer(sd, sd)
    np.fill_diagonal(R, 0.0)
    return R


def pooled_covariance(Lambda, Gamma, activation, sigma2):
    """Covariance averaged over units, using the mean activation vector."""
    mean_act = np.asarray(activation, dtype=float).mean(axis=0)
    return (Lambda @ Lambda.T + (Gamma * mean_act) @ Gamma.T
            + np.diag(sigma2))


def posterior_pooled_covariance(draws):
    states = getattr(draws, "states", draws)
    return np.mean([pooled_covariance(s.Lambda, s.Gamma, s.activation, s.sigma2)
                    for s in states], axis=0)


def correlation_recovery(draws, truth):
    """RV between the off-diagonal correlation structures of the posterior
    mean pooled covariance and the true one; the natural score on the
    probit scale, where diagonal entries carry no information."""
    est = posterior_pooled_covariance(draws)
    true = pooled_covariance(truth.Lambda_true, truth.Gamma_true, truth.Psi_true,
                             truth.sigma2_true)
    return rv_coefficient(offdiagonal_correlation(est), offdiagonal_correlation(true))


def group_covariances(state, groups):
    """Per-group average of the unit covariances for one state."""
    base = state.Lambda @ state.Lambda.T + np.diag(state.sigma2)
    act = state.activation
    out = []
    for g in np.unique(groups):
        mean_act = act[groups == g].mean(axis=0)
        out.append(base + (state.Gamma * mean_act) @ state.Gamma.T)
    return out


def posterior_group_covariances(draws, groups):
    """Posterior mean over draws of :func:`group_covariances`."""
    states = getattr(draws, "states", draws)
    total = None
    for state in states:
        covs = np.array(group_covariances(state, groups))
        total = covs if total is None else total + covs
    return list(total / len(states))


def posterior_shared_covariance(draws):
    states = getattr(draws, "states", draws)
    return np.mean([s.Lambda @ s.Lambda.T for s in states], axis=0)


def evaluate_covariance_recovery(draws, truth):
    """RV of the posterior-mean group covariances and of the shared part.

    Groups are the truth's labels, so fits that ignored the labels are
    scored on the same footing.
    """
    est = posterior_group_covariances(draws, truth.group_labels)
    rv_omega = [rv_coefficient(e, t) for e, t in zip(est, truth.Omega_by_group)]
    rv_shared = rv_coefficient(posterior_shared_covariance(draws),
                               truth.shared_covariance)
    return {"rv_omega": rv_omega, "rv_shared": rv_shared}


def posterior_activation(draws):
    """Posterior mean of the effective activations, (n, k_max) with columns
    missing from smaller draws counted as inactive."""
    states = getattr(draws, "states", draws)
    k = max(s.k for s in states)
    n = states[0].n
    total = np.zeros((n, k))
    for s in states:
        total[:, :s.k] += s.activation
    return total / len(states)


def roc_curve(scores, labels):
    """ROC points over thresholds at every distinct score plus the
    endpoints; returns (fpr, tpr, thresholds)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    thresholds = np.unique(np.concatenate([scores, [0.0, 1.0]]))[::-1]
    thresholds = np.concatenate([[np.inf], thresholds])
    pos = labels.sum()
    neg = labels.size - pos
    tpr = np.array([np.sum(scores[labels] >= t) for t in thresholds]) / pos
    fpr = np.array([np.sum(scores[~labels] >= t) for t in thresholds]) / neg
    return fpr, tpr, thresholds


def auc_trapezoid(fpr, tpr):
    return float(np.trapezoid(tpr, fpr))


@dataclass
class RocResult:
    fpr: np.ndarray = None
    tpr: np.ndarray = None
    thresholds: np.ndarray = None
    auc: object = NO_POSITIVE_CLASS
    alignment: object = None


def psi_recovery_roc(draws, truth, aligned=True):
    """ROC of posterior activation probabilities against the true pattern.

    Estimated columns are matched to true ones on the posterior-mean
    activations (positive correlation only); true columns with no partner
    are scored with probability 0. Cells of all true columns are pooled.
    """
    Psi_true = np.asarray(truth.Psi_true)
    if Psi_true.size == 0 or not Psi_true.any():
        return RocResult()
    probs = posterior_activation(draws)
    k0 = Psi_true.shape[1]
    scores = np.zeros_like(Psi_true, dtype=float)
    alignment = None
    if aligned:
        alignment = align_factor_columns(probs, Psi_true, kind="correlation",
                                         signed=False)
        for e, j in zip(alignment.permutation, alignment.reference_index):
            if j >= 0:
                scores[:, j] = probs[:, e]
    else:
        m = min(k0, probs.shape[1])
        scores[:, :m] = probs[:, :m]
    if Psi_true.all():
        return RocResult(alignment=alignment)
    fpr, tpr, thr = roc_curve(scores, Psi_true)
    return RocResult(fpr=fpr, tpr=tpr, thresholds=thr,
                     auc=auc_trapezoid(fpr, tpr), alignment=alignment)


def _iqr(x):
    q75, q25 = np.percentile(x, [75, 25])
    return float(q75 - q25)


class SummaryAccumulator:
    """Streaming posterior summary; feed states with :meth:`add`.

    Loadings are aligned (permutation and sign) to the first state seen
    before being averaged; draws with fewer columns are zero-padded.
    """

    def __init__(self, spike_value=Hyperparameters.spike_value):
        self.spike_value = spike_value
        self.counts = []
        self.m = 0
        self._act = None
        self._lambda_ref = None
        self._gamma_ref = None
        self._lambda_sum = None
        self._gamma_sum = None

    @staticmethod
    def _grow(total, width):
        if total.shape[1] < width:
            total = np.pad(total, ((0, 0), (0, width - total.shape[1])))
        return total

    def _aligned(self, ref, M):
        if ref.shape[1] == 0 or M.shape[1] == 0:
            return M
        res = align_factor_columns(M, ref, kind="cosine")
        return res.apply(M)

    def add(self, state):
        self.counts.append(active_factor_counts(state, self.spike_value))
        self.m += 1
        act = state.activation
        if self._act is None:
            self._act = act.copy()
            self._lambda_ref = state.Lambda.copy()
            self._gamma_ref = state.Gamma.copy()
            self._lambda_sum = state.Lambda.copy()
            self._gamma_sum = state.Gamma.copy()
            return self
        self._act = self._grow(self._act, act.shape[1])
        self._act[:, :act.shape[1]] += act
        lam = self._aligned(self._lambda_ref, state.Lambda)
        gam = self._aligned(self._gamma_ref, state.Gamma)
        self._lambda_sum = self._grow(self._lambda_sum, lam.shape[1])
        self._lambda_sum[:, :lam.shape[1]] += lam
        self._gamma_sum = self._grow(self._gamma_sum, gam.shape[1])
        self._gamma_sum[:, :gam.shape[1]] += gam
        return self

    def result(self):
        counts = np.array(self.counts, dtype=float).reshape(-1, 2)
        if self.m == 0:
            return {"draws": 0}
        return {
            "draws": self.m,
            "d_mean": float(counts[:, 0].mean()),
            "d_iqr": _iqr(counts[:, 0]),
            "k_mean": float(counts[:, 1].mean()),
            "k_iqr": _iqr(counts[:, 1]),
            "psi_mean": self._act / self.m,
            "lambda_mean": self._lambda_sum / self.m,
            "gamma_mean": self._gamma_sum / self.m,
        }


def posterior_summary(draws):
    """Posterior means and IQRs of the active counts, mean activation matrix
    and aligned mean loadings."""
    spike = getattr(draws, "meta", {}).get("spike_value",
                                           Hyperparameters.spike_value)
    acc = SummaryAccumulator(spike)
    for state in getattr(draws, "states", draws):
        acc.add(state)
    return acc.result()


def imputation_mse(imputed_draws, heldout_values):
    """MSE of the posterior-predictive mean; ``imputed_draws`` is either a
    (m, cells) array of draws or a (cells,) vector of means."""
    imputed = np.asarray(imputed_draws, dtype=float)
    heldout = np.asarray(heldout_values, dtype=float).ravel()
    mean = imputed.mean(axis=0) if imputed.ndim == 2 else imputed.ravel()
    if mean.shape != heldout.shape:
        raise ValueError("imputations and held-out values differ in size")
    return float(np.mean((mean - heldout) ** 2))


@dataclass
class ReplicateMetrics:
    scenario: str
    shape: str
    replicate: int
    seed: int
    d_mean: float
    k_mean: float
    rv_omega: list
    rv_shared: float
    auc: object
    runtime: float
    extra: dict = field(default_factory=dict)

    def row(self):
        out = {"scenario": self.scenario, "shape": self.shape,
               "replicate": self.replicate, "seed": self.seed,
               "d": self.d_mean, "k": self.k_mean}
        for g, rv in enumerate(self.rv_omega, start=1):
            out[f"rv_omega_{g}"] = rv
        out["rv_shared"] = self.rv_shared
        out["auc"] = self.auc
        out["runtime"] = self.runtime
        return out


def aggregate_rows(rows, keys=("d", "k", "rv_omega_1", "rv_omega_2",
                               "rv_omega_3", "rv_shared", "auc", "runtime")):
    """Monte-Carlo mean and IQR per (scenario, shape) group."""
    groups = {}
    for row in rows:
        groups.setdefault((row["scenario"], row["shape"]), []).append(row)
    out = []
    for (scenario, shape), members in groups.items():
        agg = {"scenario": scenario, "shape": shape, "replicate": "aggregate",
               "n_replicates": len(members)}
        for key in keys:
            vals = [m.get(key) for m in members]
            vals = [v for v in vals if isinstance(v, (int, float))]
            if vals:
                agg[f"{key}_mean"] = float(np.mean(vals))
                agg[f"{key}_iqr"] = _iqr(vals)
                agg[f"{key}_median"] = float(np.median(vals))
            else:
                agg[f"{key}_mean"] = NO_POSITIVE_CLASS if key == "auc" else None
        out.append(agg)
    return out
