"""Core data model: datasets, hyperparameters, chain states and the
deterministic quantities derived from them.

The observation model is

    y_i = Lambda eta_i + Gamma phi_i + eps_i,    eps_i ~ N(0, diag(sigma2)),

with ``phi_ih = tau_phi[h] * psi[i, h] * phi_tilde[i, h]``.  The gated
specific factors are never stored; they are always recomputed from the
activation indicators and the unscaled factors.
"""
from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)


class NumericFailure(ArithmeticError):
    """Raised when a covariance or precision matrix is not positive definite.

    ``unit`` is set when the failure is tied to a single observation,
    ``component``/``iteration`` when it happens inside the sampler.
    """

    def __init__(self, message, unit=None, component=None, iteration=None):
        super().__init__(message)
        self.unit = unit
        self.component = component
        self.iteration = iteration


class OutcomeKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass
class Dataset:
    """Observed data.

    Parameters
    ----------
    Y : (n, p) array
        Outcomes. Entries under ``missing_mask`` are ignored (NaN is fine).
    X : (n, S) array
        One-hot group dummies.
    Z : (n, q) array, optional
        Extra covariates entering the activation gates.
    missing_mask : (n, p) bool array, optional
        True where ``Y`` is unobserved. Defaults to ``isnan(Y)``.
    outcome_kind : OutcomeKind
    group_names : list, optional
        Labels of the columns of ``X``.
    """

    Y: np.ndarray
    X: np.ndarray
    Z: Optional[np.ndarray] = None
    missing_mask: Optional[np.ndarray] = None
    outcome_kind: OutcomeKind = OutcomeKind.CONTINUOUS
    group_names: Optional[list] = None

    def __post_init__(self):
        self.Y = np.array(self.Y, dtype=float)
        self.X = np.array(self.X, dtype=float)
        if self.Y.ndim != 2 or self.X.ndim != 2:
            raise ValueError("Y and X must be 2-d arrays")
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(
                f"Y has {self.Y.shape[0]} rows but X has {self.X.shape[0]}")
        if self.missing_mask is None:
            self.missing_mask = np.isnan(self.Y)
        else:
            self.missing_mask = np.array(self.missing_mask, dtype=bool)
            if self.missing_mask.shape != self.Y.shape:
                raise ValueError("missing_mask must have the shape of Y")
        if self.Z is not None:
            self.Z = np.array(self.Z, dtype=float)
            if self.Z.ndim == 1:
                self.Z = self.Z[:, None]
            if self.Z.shape[0] != self.Y.shape[0]:
                raise ValueError("Z must have one row per unit")
        self.outcome_kind = OutcomeKind(self.outcome_kind)
        if self.group_names is None:
            self.group_names = list(range(self.X.shape[1]))
        problems = self.violations()
        if problems:
            raise ValueError("invalid dataset: " + "; ".join(problems))

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p(self):
        return self.Y.shape[1]

    @property
    def S(self):
        return self.X.shape[1]

    @property
    def q(self):
        return 0 if self.Z is None else self.Z.shape[1]

    @property
    def binary(self):
        return self.outcome_kind is OutcomeKind.BINARY

    @property
    def design(self):
        """Gate design matrix ``[X, Z]`` of shape (n, S + q)."""
        if self.Z is None:
            return self.X
        return np.hstack([self.X, self.Z])

    @property
    def groups(self):
        """Integer group index per unit."""
        return np.argmax(self.X, axis=1)

    def violations(self):
        out = []
        if not np.all((self.X == 0) | (self.X == 1)):
            out.append("X must be binary")
        elif not np.all(self.X.sum(axis=1) == 1):
            bad = np.flatnonzero(self.X.sum(axis=1) != 1)
            out.append(f"X rows must be one-hot (first bad row {bad[0]})")
        observed = self.Y[~self.missing_mask]
        if not np.all(np.isfinite(observed)):
            out.append("observed Y entries must be finite")
        if self.binary and not np.all((observed == 0) | (observed == 1)):
            out.append("binary outcomes must be 0/1")
        return out

    @classmethod
    def from_groups(cls, Y, groups, **kwargs):
        """Build a dataset from a vector of group labels instead of dummies."""
        groups = np.asarray(groups)
        names, idx = np.unique(groups, return_inverse=True)
        X = np.zeros((len(groups), len(names)))
        X[np.arange(len(groups)), idx] = 1.0
        kwargs.setdefault("group_names", names.tolist())
        return cls(Y=Y, X=X, **kwargs)


@dataclass
class Hyperparameters:
    """Prior constants.

    ``beta_prior_scale_numerator`` is the constant ``c`` in the gate prior
    ``beta_h ~ N(0, (c / n) I)``.  The default ``c = 5000`` leaves the
    gates free to follow the study labels; with ``c = 1`` the gates stay
    near 1/2 and specific factors are often absorbed into the shared
    block.  ``d_max``/``k_max`` default to
    ``min(p, 20)`` capped at ``p(p+1)/2 - 1`` (see :meth:`resolved`).
    ``adapt_a0``/``adapt_a1`` give the adaptation probability
    ``exp(-a0 - a1 * t)``.
    """

    alpha_eta: float = 1.0
    alpha_phi: float = 4.0
    a_lambda: float = 2.0
    b_lambda: float = 2.0
    a_gamma: float = 2.0
    b_gamma: float = 2.0
    a_sigma: float = 2.0
    b_sigma: float = 2.0
    beta_prior_scale_numerator: float = 5000.0
    d_max: Optional[int] = None
    k_max: Optional[int] = None
    spike_value: float = 1e-4
    adapt_a0: float = 1.0
    adapt_a1: float = 5e-4

    def resolved(self, p):
        """Return a copy with truncation levels filled in for ``p`` variables."""
        cap = truncation_cap(p)
        default = max(1, min(p, 20, cap))
        out = copy.copy(self)
        out.d_max = default if self.d_max is None else int(self.d_max)
        out.k_max = default if self.k_max is None else int(self.k_max)
        problems = out.violations(p)
        if problems:
            raise ValueError("invalid hyperparameters: " + "; ".join(problems))
        return out

    def violations(self, p=None):
        out = []
        for name in ("alpha_eta", "alpha_phi", "a_lambda", "b_lambda",
                     "a_gamma", "b_gamma", "a_sigma", "b_sigma",
                     "beta_prior_scale_numerator", "spike_value"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        if self.spike_value >= 1:
            out.append("spike_value must be below the slab value 1")
        if self.d_max is not None and self.d_max < 1:
            out.append("d_max must be >= 1")
        if self.k_max is not None and self.k_max < 1:
            out.append("k_max must be >= 1")
        # for p = 1 the bound is 0 and a single column is still allowed
        if (p is not None and p > 1 and self.k_max is not None
                and self.k_max > truncation_cap(p)):
            out.append(f"k_max must be <= p(p+1)/2 - 1 = {truncation_cap(p)}")
        return out

    def beta_prior_variance(self, n):
        return self.beta_prior_scale_numerator / n


def truncation_cap(p):
    return p * (p + 1) // 2 - 1


@dataclass
class ModelState:
    """One full set of latent quantities.

    Column counts ``d`` (shared) and ``k`` (specific) may change during
    adaptation; every per-column array changes size with them.
    ``c_eta``/``c_phi`` are the stick-breaking component labels; column
    ``h`` is in the slab exactly when its label exceeds ``h`` (0-based).
    """

    Lambda: np.ndarray          # (p, d)
    Gamma: np.ndarray           # (p, k)
    Eta: np.ndarray             # (n, d)
    PhiTilde: np.ndarray        # (n, k)
    Psi: np.ndarray             # (n, k) 0/1
    Beta: np.ndarray            # (S + q, k)
    sigma2: np.ndarray          # (p,)
    zeta_lambda: np.ndarray     # (d,)
    zeta_gamma: np.ndarray      # (k,)
    tau_phi: np.ndarray         # (k,) 0/1
    tau_eta: np.ndarray         # (d,) 1 or spike_value
    v_eta: np.ndarray           # (d,)
    v_phi: np.ndarray           # (k,)
    c_eta: np.ndarray           # (d,) int
    c_phi: np.ndarray           # (k,) int
    ProbitZ: Optional[np.ndarray] = None
    Y_imputed: Optional[np.ndarray] = None   # completed continuous outcomes

    @property
    def n(self):
        return self.Eta.shape[0]

    @property
    def p(self):
        return self.Lambda.shape[0]

    @property
    def d(self):
        return self.Lambda.shape[1]

    @property
    def k(self):
        return self.Gamma.shape[1]

    @property
    def activation(self):
        """Effective gate ``tau_phi[h] * psi[i, h]``, shape (n, k)."""
        return self.Psi * self.tau_phi[None, :]

    @property
    def Phi(self):
        """Gated specific factors, shape (n, k)."""
        return self.activation * self.PhiTilde

    def mean(self):
        """Conditional mean ``Eta Lambda^T + Phi Gamma^T``, shape (n, p)."""
        return self.Eta @ self.Lambda.T + self.Phi @ self.Gamma.T

    def copy(self):
        return copy.deepcopy(self)

    def array_fields(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class PosteriorDraws:
    states: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def derived(self):
        """(m, 2) integer array of ``(d_active, k_active)`` per draw."""
        spike = self.meta.get("spike_value", Hyperparameters.spike_value)
        if not self.states:
            return np.zeros((0, 2), dtype=int)
        return np.array([active_factor_counts(s, spike) for s in self.states],
                        dtype=int)


@dataclass
class SyntheticTruth:
    """Generating values of a simulated dataset.

    ``Omega_by_group[s]`` averages the per-unit covariances over the units
    of group ``s``; it equals ``Lambda Lambda^T + Gamma diag(psi_s) Gamma^T +
    Sigma`` with ``psi_s`` the group's mean activation row, which is the
    group's exact pattern whenever the group is homogeneous.
    """

    Lambda_true: np.ndarray
    Gamma_true: np.ndarray
    Psi_true: np.ndarray
    sigma2_true: np.ndarray
    group_labels: np.ndarray
    Omega_by_group: list = field(default_factory=list)

    def __post_init__(self):
        if not self.Omega_by_group:
            self.Omega_by_group = [
                assemble_marginal_covariance(
                    self.Lambda_true, self.Gamma_true,
                    self.Psi_true[self.group_labels == g].mean(axis=0)
                    if self.Psi_true.shape[1] else np.zeros(0),
                    self.sigma2_true)
                for g in np.unique(self.group_labels)]

    @property
    def patterns(self):
        """Distinct activation rows (S_n, k0) and the unit-to-pattern map."""
        if self.Psi_true.shape[1] == 0:
            return np.zeros((1, 0)), np.zeros(len(self.Psi_true), dtype=int)
        rows, inverse = np.unique(self.Psi_true, axis=0, return_inverse=True)
        return rows, inverse.ravel()

    @property
    def shared_covariance(self):
        return self.Lambda_true @ self.Lambda_true.T


def assemble_marginal_covariance(Lambda, Gamma, psi_i, Sigma_diag):
    """Marginal covariance of one unit.

    Returns ``Lambda Lambda^T + Gamma diag(psi_i) Gamma^T + diag(Sigma_diag)``.
    ``psi_i`` may be fractional (an averaged activation pattern).
    """
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    Gamma = np.asarray(Gamma, dtype=float)
    psi_i = np.asarray(psi_i, dtype=float).ravel()
    Sigma_diag = np.asarray(Sigma_diag, dtype=float).ravel()
    p = Sigma_diag.shape[0]
    if Gamma.ndim == 1:
        Gamma = Gamma.reshape(p, -1)
    if Lambda.shape[0] != p or Gamma.shape[0] != p:
        raise ValueError(
            f"loadings have {Lambda.shape[0]} and {Gamma.shape[0]} rows, "
            f"expected {p}")
    if Gamma.shape[1] != psi_i.shape[0]:
        raise ValueError(
            f"Gamma has {Gamma.shape[1]} columns but psi_i has {psi_i.shape[0]}")
    out = Lambda @ Lambda.T + (Gamma * psi_i) @ Gamma.T
    out[np.diag_indices(p)] += Sigma_diag
    return 0.5 * (out + out.T)


def unit_covariances(state):
    """Per-unit marginal covariances, shape (n, p, p)."""
    base = state.Lambda @ state.Lambda.T + np.diag(state.sigma2)
    act = state.activation
    return base[None] + np.einsum("jh,ih,lh->ijl", state.Gamma, act, state.Gamma)


def _mvn_logpdf_rows(R, cov, unit=None):
    """Sum of log N(r; 0, cov) over the rows of R."""
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericFailure("covariance is not positive definite",
                             unit=unit) from exc
    sol = linalg.solve_triangular(chol, R.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    m, p = R.shape
    return -0.5 * (m * (p * LOG_2PI + logdet) + np.sum(sol * sol))


def marginal_log_likelihood(dataset, state):
    """Log-likelihood with both factor blocks integrated out.

    Units sharing an activation pattern share a covariance, so the Cholesky
    factorisation is done once per distinct pattern. Missing coordinates are
    dropped from each unit's density.
    """
    if dataset.binary:
        raise ValueError("marginal likelihood is defined for continuous outcomes")
    act = state.activation
    Y = dataset.Y
    mask = dataset.missing_mask
    total = 0.0
    patterns, inverse = np.unique(act, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for g, pattern in enumerate(patterns):
        units = np.flatnonzero(inverse == g)
        cov = assemble_marginal_covariance(state.Lambda, state.Gamma, pattern,
                                           state.sigma2)
        full = units[~mask[units].any(axis=1)]
        if full.size:
            total += _mvn_logpdf_rows(Y[full], cov, unit=int(full[0]))
        for i in units[mask[units].any(axis=1)]:
            obs = ~mask[i]
            if obs.any():
                total += _mvn_logpdf_rows(Y[i, obs][None], cov[np.ix_(obs, obs)],
                                          unit=int(i))
    return float(total)


def conditional_log_likelihood(dataset, state, Y=None):
    """Log-likelihood given all latent factors, masking missing cells.

    ``Y`` overrides the outcome matrix (used with probit latents).
    """
    if Y is None:
        Y = state.ProbitZ if dataset.binary else dataset.Y
        mask = dataset.missing_mask if not dataset.binary else np.zeros_like(
            dataset.missing_mask)
    else:
        mask = np.zeros(Y.shape, dtype=bool)
    if np.any(state.sigma2 <= 0):
        raise NumericFailure("non-positive noise variance")
    resid = np.where(mask, 0.0, Y - state.mean())
    obs = (~mask).astype(float)
    return float(-0.5 * np.sum(obs * (LOG_2PI + np.log(state.sigma2)))
                 - 0.5 * np.sum(resid ** 2 / state.sigma2))


def active_factor_counts(state, spike_value=Hyperparameters.spike_value):
    """``(d_active, k_active)``: slab shared columns and switched-on
    specific columns that activate at least one unit."""
    d_active = int(np.sum(state.tau_eta > spike_value))
    used = state.Psi.any(axis=0) if state.Psi.size else np.zeros(state.k, bool)
    k_active = int(np.sum((state.tau_phi == 1) & used))
    return d_active, k_active


def validate_state(state, dataset=None):
    """List of human-readable invariant violations; empty means valid."""
    out = []
    p, d, k = state.p, state.d, state.k
    n = state.n
    shapes = {
        "Lambda": (p, d), "Gamma": (p, k), "Eta": (n, d), "PhiTilde": (n, k),
        "Psi": (n, k), "sigma2": (p,), "zeta_lambda": (d,),
        "zeta_gamma": (k,), "tau_phi": (k,), "tau_eta": (d,), "v_eta": (d,),
        "v_phi": (k,), "c_eta": (d,), "c_phi": (k,),
    }
    for name, shape in shapes.items():
        arr = np.asarray(getattr(state, name))
        if arr.shape != shape:
            out.append(f"{name}: shape {arr.shape}, expected {shape}")
    if state.Beta.ndim != 2 or state.Beta.shape[1] != k:
        out.append(f"Beta: shape {state.Beta.shape}, expected (*, {k})")
    if dataset is not None:
        if n != dataset.n or p != dataset.p:
            out.append(f"state dimensions ({n}, {p}) do not match dataset "
                       f"({dataset.n}, {dataset.p})")
        if state.Beta.shape[0] != dataset.S + dataset.q:
            out.append(f"Beta: {state.Beta.shape[0]} rows, expected "
                       f"{dataset.S + dataset.q}")
        if dataset.binary and (state.ProbitZ is None
                               or state.ProbitZ.shape != (dataset.n, dataset.p)):
            out.append("ProbitZ: missing or misshapen for binary outcomes")
    if out:
        return out

    def _bad(name, ok):
        if ok.all():
            return
        arr = np.asarray(getattr(state, name))
        idx = np.argwhere(~ok)
        if idx.size:
            out.append(f"{name}[{', '.join(map(str, idx[0]))}]: invalid value "
                       f"{float(arr[tuple(idx[0])])!r}")

    for name in ("Lambda", "Gamma", "Eta", "PhiTilde", "Beta"):
        _bad(name, np.isfinite(getattr(state, name)))
    _bad("Psi", (state.Psi == 0) | (state.Psi == 1))
    _bad("tau_phi", (state.tau_phi == 0) | (state.tau_phi == 1))
    _bad("sigma2", np.isfinite(state.sigma2) & (state.sigma2 > 0))
    _bad("zeta_lambda", np.isfinite(state.zeta_lambda) & (state.zeta_lambda > 0))
    _bad("zeta_gamma", np.isfinite(state.zeta_gamma) & (state.zeta_gamma > 0))
    _bad("tau_eta", np.isfinite(state.tau_eta) & (state.tau_eta > 0))
    for name in ("v_eta", "v_phi"):
        v = getattr(state, name)
        # the last stick closes the truncation and is pinned to 1
        ok = (v > 0) & (v < 1)
        if v.size:
            ok[-1] = v[-1] == 1
        _bad(name, ok)
    for name, size in (("c_eta", d), ("c_phi", k)):
        c = getattr(state, name)
        _bad(name, (c >= 0) & (c < size) & (c == np.round(c)))
    if not out:
        if np.any(state.tau_phi != (state.c_phi > np.arange(k))):
            out.append("tau_phi: inconsistent with c_phi")
        slab = state.c_eta > np.arange(d)
        if np.any((state.tau_eta == 1) != slab):
            out.append("tau_eta: inconsistent with c_eta")
    if state.Y_imputed is not None:
        _bad("Y_imputed", np.isfinite(state.Y_imputed))
    if state.ProbitZ is not None:
        _bad("ProbitZ", np.isfinite(state.ProbitZ))
        if dataset is not None and dataset.binary and not out:
            y = dataset.Y
            obs = ~dataset.missing_mask
            wrong = obs & ((y == 1) != (state.ProbitZ > 0))
            if wrong.any():
                i, j = np.argwhere(wrong)[0]
                out.append(f"ProbitZ[{i}, {j}]: sign disagrees with Y")
    return out
