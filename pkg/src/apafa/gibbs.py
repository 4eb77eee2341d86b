"""Gibbs sampler for the adaptive-partition factor model.

Every ``update_*`` function draws one block from its full conditional,
writes the result into ``state`` and returns the new values. The matching
``*_conditional`` helpers return the exact conditional parameters so the
updates can be checked against numerical oracles.

Blocks and their conditionals
-----------------------------
* ``eta_i``: Gaussian, precision ``I + Lambda^T Sigma^-1 Lambda``.
* ``(psi_ih, phi_tilde_ih)``: ``psi`` is drawn with ``phi_tilde``
  integrated out, then ``phi_tilde`` given ``psi``.
* rows of ``Lambda`` and ``Gamma``: Gaussian.
* ``sigma2_j``, ``zeta``: inverse gamma.
* gate coefficients: Polya-Gamma augmentation or random-walk Metropolis.
* stick-breaking labels: drawn jointly with the column they control (the
  loadings column for the shared part, the gated factor column for the
  specific part), which is integrated out when drawing the label.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from polyagamma import random_polyagamma
from scipy import special, stats

from .model import (Hyperparameters, ModelState, NumericFailure,
                    PosteriorDraws, active_factor_counts)
from .priors import (gate_probabilities, log_stick_weights, sample_inverse_gamma,
                     sample_prior_state)

SWEEP_ORDER = ("probit", "eta", "phi_psi", "lambda", "gamma", "zeta", "sigma",
               "beta", "cusp_shared", "cusp_specific", "adapt", "impute")


@dataclass
class ChainConfig:
    """Run settings.

    Adaptation of the number of columns happens with probability
    ``exp(-a0 - a1 * t)`` for ``adapt_start <= t <= adapt_end``;
    ``adapt_end`` defaults to the end of burn-in so that retained draws
    come from a fixed kernel.
    """

    iterations: int = 10_000
    burn_in: int = 8_000
    thinning: int = 1
    seed: int = 0
    adapt_start: int = 200
    adapt_end: Optional[int] = None
    beta_update: str = "augmentation"
    rw_step: float = 0.15
    init_factors: int = 12
    adapt: bool = True
    label_start: int = 0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.beta_update not in ("augmentation", "random_walk"):
            raise ValueError("beta_update must be 'augmentation' or 'random_walk'")
        if self.rw_step <= 0:
            raise ValueError("rw_step must be positive")
        if self.adapt_end is None:
            self.adapt_end = self.burn_in

    @property
    def n_saved(self):
        return (self.iterations - self.burn_in) // self.thinning


def outcome_matrix(state, dataset):
    """Working outcomes: probit latents, or data completed by imputations."""
    if dataset.binary:
        return state.ProbitZ
    if state.Y_imputed is not None:
        return state.Y_imputed
    if dataset.missing_mask.any():
        raise ValueError("missing cells need state.Y_imputed; see initial_state")
    return dataset.Y


def _chol(prec, component):
    try:
        return np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"{component}: precision not positive definite",
                             component=component) from exc


def _gaussian_draw(rng, prec, rhs, component):
    """Draw from N(prec^-1 rhs, prec^-1); batched over leading axes of rhs."""
    L = _chol(prec, component)
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0] if prec.ndim == 3 \
        else np.linalg.solve(prec, rhs.T).T
    z = rng.standard_normal(rhs.shape)
    if prec.ndim == 3:
        noise = np.linalg.solve(np.swapaxes(L, -1, -2), z[..., None])[..., 0]
    else:
        noise = np.linalg.solve(L.T, z.T).T
    return mean + noise


# ---------------------------------------------------------------- shared factors

def eta_conditional(state, Y):
    """Means (n, d) and common covariance (d, d) of the shared factors."""
    Lt_s = state.Lambda.T / state.sigma2
    prec = np.eye(state.d) + Lt_s @ state.Lambda
    resid = Y - state.Phi @ state.Gamma.T
    cov = np.linalg.inv(prec)
    return resid @ Lt_s.T @ cov, cov


def update_eta(state, dataset, rng, Y=None):
    Y = outcome_matrix(state, dataset) if Y is None else Y
    Lt_s = state.Lambda.T / state.sigma2
    prec = np.eye(state.d) + Lt_s @ state.Lambda
    rhs = (Y - state.Phi @ state.Gamma.T) @ Lt_s.T
    state.Eta = _gaussian_draw(rng, prec, rhs, "eta")
    return state.Eta


# -------------------------------------------------------------- specific factors

def _slab_terms(gamma_h, sigma2, resid):
    """Collapsed spike/slab quantities for one specific column.

    Returns ``q = gamma' Sigma^-1 gamma``, ``s_i = gamma' Sigma^-1 r_i`` and
    the per-unit log likelihood ratio of switching the column on with the
    unscaled factor integrated out.
    """
    g = gamma_h / sigma2
    q = float(gamma_h @ g)
    s = resid @ g
    log_lr = -0.5 * np.log1p(q) + 0.5 * s * s / (1.0 + q)
    return q, s, log_lr


def psi_conditional_probability(state, Y, i, h, design):
    """P(psi_ih = 1 | everything except phi_tilde_ih)."""
    gate = special.expit(design[i] @ state.Beta[:, h])
    if state.tau_phi[h] == 0:
        return float(gate)
    resid = Y[i] - state.Lambda @ state.Eta[i] - state.Gamma @ state.Phi[i]
    resid = resid + state.Gamma[:, h] * state.Phi[i, h]
    _, _, log_lr = _slab_terms(state.Gamma[:, h], state.sigma2, resid[None])
    return float(special.expit(special.logit(gate) + log_lr[0]))


def specific_factor_conditional(state, Y, i, h):
    """Mean and variance of ``phi_tilde_ih`` given ``psi_ih = 1`` and an
    active column."""
    resid = Y[i] - state.Lambda @ state.Eta[i] - state.Gamma @ state.Phi[i]
    resid = resid + state.Gamma[:, h] * state.Phi[i, h]
    q, s, _ = _slab_terms(state.Gamma[:, h], state.sigma2, resid[None])
    return float(s[0] / (1.0 + q)), 1.0 / (1.0 + q)


def _draw_specific_column(state, h, resid_h, gate, rng):
    """Draw (psi, phi_tilde) for column h given the residual without it."""
    n = resid_h.shape[0]
    if state.tau_phi[h] == 1:
        q, s, log_lr = _slab_terms(state.Gamma[:, h], state.sigma2, resid_h)
        with np.errstate(divide="ignore"):
            logit = np.log(gate) - np.log1p(-gate) + log_lr
        psi = (rng.random(n) < special.expit(logit)).astype(float)
        z = rng.standard_normal(n)
        phi = np.where(psi == 1, s / (1.0 + q) + z / np.sqrt(1.0 + q), z)
    else:
        psi = (rng.random(n) < gate).astype(float)
        phi = rng.standard_normal(n)
    state.Psi[:, h] = psi
    state.PhiTilde[:, h] = phi


def update_phi_and_psi(state, dataset, rng, Y=None):
    Y = outcome_matrix(state, dataset) if Y is None else Y
    gates = gate_probabilities(dataset.design, state.Beta)
    resid = Y - state.Eta @ state.Lambda.T - state.Phi @ state.Gamma.T
    for h in range(state.k):
        col = state.Phi[:, h]
        resid += np.outer(col, state.Gamma[:, h])
        _draw_specific_column(state, h, resid, gates[:, h], rng)
        resid -= np.outer(state.Phi[:, h], state.Gamma[:, h])
    return state.PhiTilde, state.Psi


# -------------------------------------------------------------------- loadings

def _row_conditional(design, resid, prior_var, sigma2):
    """Precisions (p, m, m) and right-hand sides (p, m) for loading rows."""
    gram = design.T @ design
    prec = gram[None] / sigma2[:, None, None] + np.diag(1.0 / prior_var)[None]
    rhs = (resid.T @ design) / sigma2[:, None]
    return prec, rhs


def lambda_conditional(state, Y):
    """Row means (p, d) and covariances (p, d, d) of the shared loadings."""
    prec, rhs = _row_conditional(state.Eta, Y - state.Phi @ state.Gamma.T,
                                 state.tau_eta * state.zeta_lambda, state.sigma2)
    cov = np.linalg.inv(prec)
    return np.einsum("jab,jb->ja", cov, rhs), cov


def gamma_conditional(state, Y):
    prec, rhs = _row_conditional(state.Phi, Y - state.Eta @ state.Lambda.T,
                                 state.zeta_gamma, state.sigma2)
    cov = np.linalg.inv(prec)
    return np.einsum("jab,jb->ja", cov, rhs), cov


def update_lambda(state, dataset, rng, Y=None):
    Y = outcome_matrix(state, dataset) if Y is None else Y
    if state.d:
        prec, rhs = _row_conditional(state.Eta, Y - state.Phi @ state.Gamma.T,
                                     state.tau_eta * state.zeta_lambda,
                                     state.sigma2)
        state.Lambda = _gaussian_draw(rng, prec, rhs, "lambda")
    return state.Lambda


def update_gamma(state, dataset, rng, Y=None):
    Y = outcome_matrix(state, dataset) if Y is None else Y
    if state.k:
        prec, rhs = _row_conditional(state.Phi, Y - state.Eta @ state.Lambda.T,
                                     state.zeta_gamma, state.sigma2)
        state.Gamma = _gaussian_draw(rng, prec, rhs, "gamma")
    return state.Gamma


# -------------------------------------------------------------- variance scales

def sigma_conditional(state, Y, hyper):
    """Inverse-gamma (shape, rate) arrays for the noise variances."""
    resid = Y - state.mean()
    n = Y.shape[0]
    shape = np.full(state.p, hyper.a_sigma + 0.5 * n)
    rate = hyper.b_sigma + 0.5 * np.sum(resid ** 2, axis=0)
    return shape, rate


def update_sigma(state, dataset, hyper, rng, Y=None):
    if dataset.binary:
        # probit scale is fixed for identifiability
        state.sigma2 = np.ones(state.p)
        return state.sigma2
    Y = outcome_matrix(state, dataset) if Y is None else Y
    shape, rate = sigma_conditional(state, Y, hyper)
    state.sigma2 = sample_inverse_gamma(rng, shape, rate)
    return state.sigma2


def zeta_conditionals(state, hyper):
    """((shape, rate) for zeta_lambda, (shape, rate) for zeta_gamma)."""
    p = state.p
    lam = (np.full(state.d, hyper.a_lambda + 0.5 * p),
           hyper.b_lambda + 0.5 * np.sum(state.Lambda ** 2, axis=0) / state.tau_eta)
    gam = (np.full(state.k, hyper.a_gamma + 0.5 * p),
           hyper.b_gamma + 0.5 * np.sum(state.Gamma ** 2, axis=0))
    return lam, gam


def update_zetas(state, hyper, rng):
    (a_l, b_l), (a_g, b_g) = zeta_conditionals(state, hyper)
    state.zeta_lambda = sample_inverse_gamma(rng, a_l, b_l)
    state.zeta_gamma = sample_inverse_gamma(rng, a_g, b_g)
    return state.zeta_lambda, state.zeta_gamma


# ------------------------------------------------------------------------ gates

def beta_log_conditional(beta_h, psi_h, design, prior_var):
    """Unnormalised log conditional of one gate column."""
    logits = design @ beta_h
    return float(np.sum(psi_h * logits - np.logaddexp(0.0, logits))
                 - 0.5 * np.sum(beta_h ** 2) / prior_var)


def update_beta(state, dataset, cfg, hyper, rng):
    """Refresh every gate column given the activation indicators.

    With ``cfg.beta_update == "augmentation"`` each column is drawn exactly
    after Polya-Gamma augmentation; otherwise one random-walk Metropolis step
    with proposal scale ``cfg.rw_step`` is made per column.
    """
    design = dataset.design
    n, m = design.shape
    prior_var = hyper.beta_prior_variance(n)
    if state.k == 0:
        return state.Beta
    if cfg.beta_update == "augmentation":
        logits = design @ state.Beta
        omega = random_polyagamma(1.0, logits, random_state=rng)
        kappa = state.Psi - 0.5
        prec = np.einsum("ia,ih,ib->hab", design, omega, design)
        prec += np.eye(m)[None] / prior_var
        rhs = (design.T @ kappa).T
        state.Beta = _gaussian_draw(rng, prec, rhs, "beta").T.copy()
    else:
        for h in range(state.k):
            current = state.Beta[:, h]
            proposal = current + cfg.rw_step * rng.standard_normal(m)
            log_ratio = (beta_log_conditional(proposal, state.Psi[:, h], design,
                                              prior_var)
                         - beta_log_conditional(current, state.Psi[:, h], design,
                                                prior_var))
            if np.log(rng.random()) < log_ratio:
                state.Beta[:, h] = proposal
    return state.Beta


# ------------------------------------------------------- cumulative shrinkage

def _sample_label(rng, log_w, h, loglik_spike, loglik_slab):
    """Label for column h: components <= h are spikes, the rest slabs."""
    size = log_w.shape[0]
    logp = log_w + np.where(np.arange(size) <= h, loglik_spike, loglik_slab)
    prob = np.exp(logp - logp.max())
    cdf = np.cumsum(prob)
    label = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(label, size - 1), prob / cdf[-1]


def stick_conditionals(labels, alpha, size):
    """Beta parameters ``(1 + N_l, alpha + sum_{m>l} N_m)`` of the sticks
    given the column labels."""
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=size)
    tail = counts[::-1].cumsum()[::-1]
    above = np.concatenate([tail[1:], [0]])
    return 1.0 + counts, alpha + above


def _update_sticks(rng, labels, alpha, size):
    a, b = stick_conditionals(labels, alpha, size)
    v = rng.beta(a, b)
    v[-1] = 1.0
    # keep interior sticks off the boundary so log weights stay finite
    v[:-1] = np.clip(v[:-1], 1e-12, 1 - 1e-12)
    return v


def shared_label_loglik(state, h, resid_h, hyper):
    """Log marginal likelihood (spike, slab) of the residual for column h
    with the loadings column integrated out."""
    u = state.Eta[:, h]
    e = float(u @ u)
    g = resid_h.T @ u
    out = []
    for tau in (hyper.spike_value, 1.0):
        a = tau * state.zeta_lambda[h]
        denom = 1.0 + a * e / state.sigma2
        out.append(float(np.sum(-0.5 * np.log(denom)
                                + 0.5 * a * g * g / (state.sigma2 ** 2 * denom))))
    return tuple(out)


def shared_label_probabilities(state, h, Y, hyper):
    resid = Y - state.mean() + np.outer(state.Eta[:, h], state.Lambda[:, h])
    spike, slab = shared_label_loglik(state, h, resid, hyper)
    log_w = log_stick_weights(state.v_eta)
    logp = log_w + np.where(np.arange(state.d) <= h, spike, slab)
    prob = np.exp(logp - logp.max())
    return prob / prob.sum()


def update_cusp_shared(state, dataset, hyper, rng, Y=None):
    """Labels, scales and sticks of the shared columns.

    Each label is drawn with its loadings column integrated out and the
    column is then redrawn from its conditional, which keeps columns able
    to leave the spike.
    """
    if state.d == 0:
        return state.tau_eta, state.v_eta, state.c_eta
    Y = outcome_matrix(state, dataset) if Y is None else Y
    log_w = log_stick_weights(state.v_eta)
    resid = Y - state.mean()
    for h in range(state.d):
        resid += np.outer(state.Eta[:, h], state.Lambda[:, h])
        spike, slab = shared_label_loglik(state, h, resid, hyper)
        c, _ = _sample_label(rng, log_w, h, spike, slab)
        state.c_eta[h] = c
        state.tau_eta[h] = 1.0 if c > h else hyper.spike_value
        u = state.Eta[:, h]
        prec = 1.0 / (state.tau_eta[h] * state.zeta_lambda[h]) + (u @ u) / state.sigma2
        mean = (resid.T @ u) / state.sigma2 / prec
        state.Lambda[:, h] = mean + rng.standard_normal(state.p) / np.sqrt(prec)
        resid -= np.outer(u, state.Lambda[:, h])
    state.v_eta = _update_sticks(rng, state.c_eta, hyper.alpha_eta, state.d)
    return state.tau_eta, state.v_eta, state.c_eta


def specific_label_loglik(state, h, resid_h, gate):
    """Log marginal likelihood (spike, slab) for specific column h with its
    activations and unscaled factors integrated out."""
    _, _, log_lr = _slab_terms(state.Gamma[:, h], state.sigma2, resid_h)
    with np.errstate(divide="ignore"):
        slab = np.sum(np.logaddexp(np.log1p(-gate), np.log(gate) + log_lr))
    return 0.0, float(slab)


def specific_label_probabilities(state, h, Y, design):
    gates = gate_probabilities(design, state.Beta)
    resid = Y - state.mean() + np.outer(state.Phi[:, h], state.Gamma[:, h])
    spike, slab = specific_label_loglik(state, h, resid, gates[:, h])
    log_w = log_stick_weights(state.v_phi)
    logp = log_w + np.where(np.arange(state.k) <= h, spike, slab)
    prob = np.exp(logp - logp.max())
    return prob / prob.sum()


def update_cusp_specific(state, dataset, hyper, rng, Y=None):
    """Labels, switches and sticks of the specific columns, each label drawn
    jointly with its column of activations and unscaled factors."""
    if state.k == 0:
        return state.tau_phi, state.v_phi, state.c_phi
    Y = outcome_matrix(state, dataset) if Y is None else Y
    gates = gate_probabilities(dataset.design, state.Beta)
    log_w = log_stick_weights(state.v_phi)
    resid = Y - state.mean()
    for h in range(state.k):
        resid += np.outer(state.Phi[:, h], state.Gamma[:, h])
        spike, slab = specific_label_loglik(state, h, resid, gates[:, h])
        c, _ = _sample_label(rng, log_w, h, spike, slab)
        state.c_phi[h] = c
        state.tau_phi[h] = 1.0 if c > h else 0.0
        _draw_specific_column(state, h, resid, gates[:, h], rng)
        resid -= np.outer(state.Phi[:, h], state.Gamma[:, h])
    state.v_phi = _update_sticks(rng, state.c_phi, hyper.alpha_phi, state.k)
    return state.tau_phi, state.v_phi, state.c_phi


# -------------------------------------------------------------------- adaptation

def _resize_plan(active, cap):
    """'drop' with the new size, 'grow', or None."""
    size = active.shape[0]
    idx = np.flatnonzero(active)
    last = idx[-1] if idx.size else -1
    trailing = size - 1 - last
    if trailing >= 2:
        return "drop", last + 2
    if size < cap:
        return "grow", size + 1
    return None, size


def _truncate_block(v, c, keep):
    v = v[:keep].copy()
    v[-1] = 1.0
    c = np.minimum(c[:keep], keep - 1)
    return v, c


def adapt_truncation(state, iteration, cfg, hyper, dataset, rng, force=False):
    """Resize the shared and specific blocks.

    With probability ``exp(-a0 - a1 * iteration)`` (always when ``force``)
    each block either drops trailing inactive columns beyond the last active
    one, keeping one inactive buffer, or, when only the buffer is inactive,
    gains one inactive column drawn from the prior. Sizes never exceed
    ``d_max``/``k_max``. Returns True when the state was touched.
    """
    if not force:
        if not cfg.adapt or not cfg.adapt_start <= iteration <= cfg.adapt_end:
            return False
        if rng.random() >= np.exp(-hyper.adapt_a0 - hyper.adapt_a1 * iteration):
            return False
    n = state.n
    design = dataset.design

    action, size = _resize_plan(state.tau_eta == 1.0, hyper.d_max)
    if action == "drop":
        state.v_eta, state.c_eta = _truncate_block(state.v_eta, state.c_eta, size)
        state.Lambda = state.Lambda[:, :size]
        state.Eta = state.Eta[:, :size]
        state.zeta_lambda = state.zeta_lambda[:size]
        state.tau_eta = np.where(state.c_eta > np.arange(size), 1.0,
                                 hyper.spike_value)
    elif action == "grow":
        d = state.d
        v = np.append(state.v_eta, 1.0)
        if d:
            v[d - 1] = rng.beta(1.0, hyper.alpha_eta)
        zeta = sample_inverse_gamma(rng, hyper.a_lambda, hyper.b_lambda)
        state.v_eta = v
        state.c_eta = np.append(state.c_eta, d).astype(int)
        state.tau_eta = np.append(state.tau_eta, hyper.spike_value)
        state.zeta_lambda = np.append(state.zeta_lambda, zeta)
        state.Lambda = np.column_stack([
            state.Lambda,
            rng.standard_normal(state.p) * np.sqrt(hyper.spike_value * zeta)])
        state.Eta = np.column_stack([state.Eta, rng.standard_normal(n)])

    action, size = _resize_plan(state.tau_phi == 1.0, hyper.k_max)
    if action == "drop":
        state.v_phi, state.c_phi = _truncate_block(state.v_phi, state.c_phi, size)
        for name in ("Gamma", "PhiTilde", "Psi", "Beta"):
            setattr(state, name, getattr(state, name)[:, :size])
        state.zeta_gamma = state.zeta_gamma[:size]
        state.tau_phi = (state.c_phi > np.arange(size)).astype(float)
    elif action == "grow":
        k = state.k
        v = np.append(state.v_phi, 1.0)
        if k:
            v[k - 1] = rng.beta(1.0, hyper.alpha_phi)
        zeta = sample_inverse_gamma(rng, hyper.a_gamma, hyper.b_gamma)
        beta = rng.standard_normal(design.shape[1]) * np.sqrt(
            hyper.beta_prior_variance(n))
        psi = (rng.random(n) < special.expit(design @ beta)).astype(float)
        state.v_phi = v
        state.c_phi = np.append(state.c_phi, k).astype(int)
        state.tau_phi = np.append(state.tau_phi, 0.0)
        state.zeta_gamma = np.append(state.zeta_gamma, zeta)
        state.Gamma = np.column_stack([
            state.Gamma, rng.standard_normal(state.p) * np.sqrt(zeta)])
        state.Beta = np.column_stack([state.Beta, beta])
        state.Psi = np.column_stack([state.Psi, psi])
        state.PhiTilde = np.column_stack([state.PhiTilde, rng.standard_normal(n)])
    return True


# ----------------------------------------------------------- probit and missing

def update_probit_latents(state, dataset, rng):
    """Truncated-normal latents: positive where y = 1, non-positive where
    y = 0, unconstrained where y is missing."""
    mean = state.mean()
    sd = np.sqrt(state.sigma2)[None, :]
    y = dataset.Y
    missing = dataset.missing_mask
    lower = np.where(y == 1, 0.0, -np.inf)
    upper = np.where(y == 1, np.inf, 0.0)
    lower = np.where(missing, -np.inf, lower)
    upper = np.where(missing, np.inf, upper)
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    z = stats.truncnorm.rvs(a, b, loc=mean, scale=sd * np.ones_like(mean),
                            random_state=rng)
    # numerical guard for draws landing exactly on the boundary
    z = np.where((y == 1) & ~missing & (z <= 0), np.nextafter(0.0, 1.0), z)
    state.ProbitZ = z
    return z


def impute_missing(state, dataset, rng):
    """Posterior-predictive draws for the masked cells.

    Returns a (n_missing,) array in row-major order of the mask. Continuous
    draws are written into ``state.Y_imputed``; for binary data the probit
    latents are thresholded.
    """
    mask = dataset.missing_mask
    if not mask.any():
        return np.zeros(0)
    if dataset.binary:
        return (state.ProbitZ[mask] > 0).astype(float)
    mean = state.mean()
    draws = mean + rng.standard_normal(mean.shape) * np.sqrt(state.sigma2)
    if state.Y_imputed is None:
        state.Y_imputed = np.where(mask, 0.0, dataset.Y)
    state.Y_imputed[mask] = draws[mask]
    return state.Y_imputed[mask].copy()


# ------------------------------------------------------------------ orchestration

def initial_state(dataset, hyper, cfg, rng):
    """Starting point: ``min(init_factors, cap)`` columns per block, all but
    the last active, loadings from the prior, gate coefficients at zero and
    activations from the resulting fair-coin gates."""
    hyper = hyper.resolved(dataset.p)
    d = min(cfg.init_factors, hyper.d_max)
    k = min(cfg.init_factors, hyper.k_max)
    state = sample_prior_state(hyper, dataset.n, dataset.p, dataset.S, rng,
                               X=dataset.X, Z=dataset.Z, binary=dataset.binary,
                               d=d, k=k)
    state.c_eta = np.full(d, d - 1)
    state.c_phi = np.full(k, k - 1)
    state.tau_eta = np.where(np.arange(d) < d - 1, 1.0, hyper.spike_value)
    state.tau_phi = (np.arange(k) < k - 1).astype(float)
    state.Lambda = rng.standard_normal((dataset.p, d)) * np.sqrt(
        state.tau_eta * state.zeta_lambda)
    state.Beta = np.zeros_like(state.Beta)
    state.Psi = (rng.random((dataset.n, k)) < 0.5).astype(float)
    mask = dataset.missing_mask
    if dataset.binary:
        state.sigma2 = np.ones(dataset.p)
        update_probit_latents(state, dataset, rng)
    else:
        filled = np.where(mask, np.nan, dataset.Y)
        col_mean = np.nanmean(filled, axis=0)
        col_var = np.nanvar(filled, axis=0)
        state.sigma2 = 0.5 * np.where(col_var > 0, col_var, 1.0)
        if mask.any():
            state.Y_imputed = np.where(mask, col_mean[None, :], dataset.Y)
    return state


def gibbs_sweep(state, dataset, hyper, cfg, rng, iteration=0, timings=None):
    """One full scan in :data:`SWEEP_ORDER`. Mutates and returns ``state``."""
    steps = (
        ("probit", lambda: dataset.binary and update_probit_latents(state, dataset, rng)),
        ("eta", lambda: update_eta(state, dataset, rng)),
        ("phi_psi", lambda: update_phi_and_psi(state, dataset, rng)),
        ("lambda", lambda: update_lambda(state, dataset, rng)),
        ("gamma", lambda: update_gamma(state, dataset, rng)),
        ("zeta", lambda: update_zetas(state, hyper, rng)),
        ("sigma", lambda: update_sigma(state, dataset, hyper, rng)),
        ("beta", lambda: update_beta(state, dataset, cfg, hyper, rng)),
        ("cusp_shared", lambda: iteration >= cfg.label_start
         and update_cusp_shared(state, dataset, hyper, rng)),
        ("cusp_specific", lambda: iteration >= cfg.label_start
         and update_cusp_specific(state, dataset, hyper, rng)),
        ("adapt", lambda: adapt_truncation(state, iteration, cfg, hyper, dataset, rng)),
        ("impute", lambda: impute_missing(state, dataset, rng)),
    )
    for name, step in steps:
        t0 = time.perf_counter()
        try:
            step()
        except NumericFailure as exc:
            exc.component = exc.component or name
            exc.iteration = iteration
            raise
        except np.linalg.LinAlgError as exc:
            raise NumericFailure(str(exc), component=name,
                                 iteration=iteration) from exc
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0
    return state


def run_chain(dataset, hyper=None, cfg=None, callback=None):
    """Run the sampler and keep thinned post-burn-in states.

    ``callback(iteration, state)`` is called after every sweep when given.
    """
    hyper = (hyper or Hyperparameters()).resolved(dataset.p)
    cfg = cfg or ChainConfig()
    rng = np.random.default_rng(cfg.seed)
    state = initial_state(dataset, hyper, cfg, rng)
    timings = {}
    draws = PosteriorDraws(meta={
        "seed": cfg.seed, "iterations": cfg.iterations, "burn_in": cfg.burn_in,
        "thinning": cfg.thinning, "spike_value": hyper.spike_value,
        "beta_update": cfg.beta_update, "n": dataset.n, "p": dataset.p,
    })
    imputations = []
    start = time.perf_counter()
    for t in range(cfg.iterations):
        gibbs_sweep(state, dataset, hyper, cfg, rng, iteration=t, timings=timings)
        if callback is not None:
            callback(t, state)
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thinning == 0:
            draws.states.append(state.copy())
            if dataset.missing_mask.any():
                imputations.append(_current_imputation(state, dataset))
    draws.meta["runtime"] = time.perf_counter() - start
    draws.meta["timings"] = timings
    if imputations:
        draws.meta["imputations"] = np.array(imputations)
    return draws


def _current_imputation(state, dataset):
    mask = dataset.missing_mask
    if dataset.binary:
        return (state.ProbitZ[mask] > 0).astype(float)
    return state.Y_imputed[mask].copy()


def posterior_predictive_mean(draws, dataset):
    """Mean over draws of ``E[y_ij | state]`` at the masked cells."""
    mask = dataset.missing_mask
    means = [s.mean()[mask] for s in draws.states]
    if dataset.binary:
        return np.mean([stats.norm.cdf(m) for m in means], axis=0)
    return np.mean(means, axis=0)
