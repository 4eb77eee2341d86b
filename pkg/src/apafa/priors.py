"""Prior laws: cumulative shrinkage sticks, logistic activation gates,
inverse-gamma scales, and joint prior sampling / density."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .model import Hyperparameters, ModelState, validate_state


@dataclass(frozen=True)
class CuspWeights:
    v: np.ndarray
    w: np.ndarray
    rho: np.ndarray


def cusp_stick_weights(v):
    """Stick-breaking weights and their cumulative sums.

    ``w_l = v_l * prod_{m<l} (1 - v_m)`` and ``rho_h = sum_{l<=h} w_l``.
    Every stick must lie in (0, 1); the last one may equal 1, which closes
    a finite truncation.
    """
    v = np.asarray(v, dtype=float).ravel()
    inner_ok = np.all((v[:-1] > 0) & (v[:-1] < 1))
    last_ok = v.size == 0 or 0 < v[-1] <= 1
    if not (inner_ok and last_ok):
        raise ValueError("stick proportions must lie in (0, 1)")
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    w = v * remaining
    rho = np.minimum(np.cumsum(w), 1.0)
    return CuspWeights(v=v, w=w, rho=rho)


def log_stick_weights(v):
    """``log w`` computed without underflow for long sticks."""
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        log1m = np.log1p(-v)
    return np.log(v) + np.concatenate([[0.0], np.cumsum(log1m)[:-1]])


def gate_probability(beta_h, x_i, beta_z=None, z_i=None):
    """Activation probability ``logit^-1(x_i . beta_h + z_i . beta_z)``."""
    eta = float(np.dot(x_i, beta_h))
    if beta_z is not None and z_i is not None:
        eta += float(np.dot(z_i, beta_z))
    return float(special.expit(eta))


def gate_probabilities(design, Beta):
    """Vectorised gates, shape (n, k), for design ``[X, Z]``."""
    return special.expit(design @ Beta)


def sample_inverse_gamma(rng, shape, rate, size=None):
    return 1.0 / rng.gamma(shape, 1.0 / np.asarray(rate), size=size)


def sample_sticks(rng, alpha, size):
    v = rng.beta(1.0, alpha, size=size)
    if size:
        # extreme alphas can round interior sticks onto the boundary
        v[:-1] = np.clip(v[:-1], 1e-12, 1 - 1e-12)
        v[-1] = 1.0
    return v


def sample_labels(rng, v):
    w = cusp_stick_weights(v).w
    return rng.choice(len(v), size=len(v), p=w / w.sum())


def _default_design(n, S):
    X = np.zeros((n, S))
    X[np.arange(n), np.arange(n) % S] = 1.0
    return X


def sample_prior_state(hyper, n, p, S, seed, *, X=None, Z=None, binary=False,
                       d=None, k=None):
    """Draw a complete state from the prior.

    ``seed`` may be an integer or a ``numpy.random.Generator``. Without
    ``X`` units are assigned to groups round-robin. ``d``/``k`` default to
    the truncation levels. For binary outcomes the noise variances are
    fixed at 1 and the probit latents are drawn given the factors.
    """
    rng = np.random.default_rng(seed)
    hyper = hyper.resolved(p)
    d = hyper.d_max if d is None else d
    k = hyper.k_max if k is None else k
    if X is None:
        X = _default_design(n, S)
    design = X if Z is None else np.hstack([X, Z])

    v_eta = sample_sticks(rng, hyper.alpha_eta, d)
    c_eta = sample_labels(rng, v_eta)
    tau_eta = np.where(c_eta > np.arange(d), 1.0, hyper.spike_value)
    v_phi = sample_sticks(rng, hyper.alpha_phi, k)
    c_phi = sample_labels(rng, v_phi)
    tau_phi = (c_phi > np.arange(k)).astype(float)

    zeta_lambda = sample_inverse_gamma(rng, hyper.a_lambda, hyper.b_lambda, d)
    zeta_gamma = sample_inverse_gamma(rng, hyper.a_gamma, hyper.b_gamma, k)
    Lambda = rng.standard_normal((p, d)) * np.sqrt(tau_eta * zeta_lambda)
    Gamma = rng.standard_normal((p, k)) * np.sqrt(zeta_gamma)
    Beta = rng.standard_normal((design.shape[1], k)) * np.sqrt(
        hyper.beta_prior_variance(n))
    Psi = (rng.random((n, k)) < gate_probabilities(design, Beta)).astype(float)
    Eta = rng.standard_normal((n, d))
    PhiTilde = rng.standard_normal((n, k))
    if binary:
        sigma2 = np.ones(p)
    else:
        sigma2 = sample_inverse_gamma(rng, hyper.a_sigma, hyper.b_sigma, p)
    state = ModelState(
        Lambda=Lambda, Gamma=Gamma, Eta=Eta, PhiTilde=PhiTilde, Psi=Psi,
        Beta=Beta, sigma2=sigma2, zeta_lambda=zeta_lambda,
        zeta_gamma=zeta_gamma, tau_phi=tau_phi, tau_eta=tau_eta,
        v_eta=v_eta, v_phi=v_phi, c_eta=c_eta, c_phi=c_phi)
    if binary:
        state.ProbitZ = state.mean() + rng.standard_normal((n, p))
    return state


def sample_outcomes(state, rng, binary=False):
    """Draw outcomes given every latent quantity.

    For binary outcomes fresh probit latents are drawn as well and
    returned alongside ``Y`` (``(Y, Z)``); otherwise ``(Y, None)``.
    """
    latent = state.mean() + rng.standard_normal(state.mean().shape) * np.sqrt(
        state.sigma2)
    if binary:
        return (latent > 0).astype(float), latent
    return latent, None


def _ig_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    return a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(x) - b / x


def _norm_logpdf(x, var=1.0):
    # closed form; the frozen-distribution path dominates runtime in loops
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * np.square(x) / var


def log_prior_density(state, hyper, design, binary=False):
    """Joint log prior of every latent quantity except the probit latents.

    The probit latents enter through the likelihood, so
    ``log_prior_density + conditional_log_likelihood`` is the log joint.
    """
    if isinstance(hyper, Hyperparameters):
        hyper = hyper.resolved(state.p)
    n = design.shape[0]
    problems = validate_state(state)
    if problems:
        raise ValueError("invalid state: " + "; ".join(problems))

    total = 0.0
    for v, c, alpha in ((state.v_eta, state.c_eta, hyper.alpha_eta),
                        (state.v_phi, state.c_phi, hyper.alpha_phi)):
        if v.size:
            # Beta(1, alpha) density of the free sticks
            total += np.sum(np.log(alpha) + (alpha - 1) * np.log1p(-v[:-1]))
            total += np.sum(log_stick_weights(v)[c.astype(int)])
    total += np.sum(_ig_logpdf(state.zeta_lambda, hyper.a_lambda, hyper.b_lambda))
    total += np.sum(_ig_logpdf(state.zeta_gamma, hyper.a_gamma, hyper.b_gamma))
    total += np.sum(_norm_logpdf(state.Lambda, state.tau_eta * state.zeta_lambda))
    total += np.sum(_norm_logpdf(state.Gamma, state.zeta_gamma))
    total += np.sum(_norm_logpdf(state.Beta, hyper.beta_prior_variance(n)))
    logits = design @ state.Beta
    total += np.sum(np.where(state.Psi == 1, -np.logaddexp(0, -logits),
                             -np.logaddexp(0, logits)))
    total += np.sum(_norm_logpdf(state.Eta))
    total += np.sum(_norm_logpdf(state.PhiTilde))
    if not binary:
        total += np.sum(_ig_logpdf(state.sigma2, hyper.a_sigma, hyper.b_sigma))
    return float(total)
