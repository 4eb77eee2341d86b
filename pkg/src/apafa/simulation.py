"""Synthetic multi-study datasets with known generating values.

Scenarios
---------
A      three studies, each with one exclusive specific factor.
Astar  the same data as A with the study labels withheld (one group).
B      homogeneous studies, no specific factors.
C      factors active in study 1, in study 2, and in studies 2 and 3.
D      each study's factor is active for the first half of its units only.

Shapes are ``tall`` (n=60, p=10) and ``large`` (n=45, p=60), with three
equal-sized studies and three shared factors.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import (NO_POSITIVE_CLASS, ReplicateMetrics, aggregate_rows,
                         evaluate_covariance_recovery, posterior_summary,
                         psi_recovery_roc)
from .gibbs import ChainConfig, run_chain
from .identifiability import check_rank_condition
from .model import Dataset, Hyperparameters, SyntheticTruth

SCENARIOS = ("A", "Astar", "B", "C", "D")
SHAPES = {"tall": (60, 10), "large": (45, 60)}


@dataclass
class ScenarioConfig:
    scenario: str = "A"
    shape: str = "tall"
    seed: int = 0
    loading_scale: float = 1.0
    noise_shape_rate: tuple = (3.0, 1.0)
    d0: int = 3
    group_sizes: tuple = field(default=None)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; "
                             f"expected one of {SCENARIOS}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected tall or large")
        n, _ = SHAPES[self.shape]
        if self.group_sizes is None:
            self.group_sizes = (n // 3,) * 3
        if len(self.group_sizes) != 3 or sum(self.group_sizes) != n:
            raise ValueError(f"three groups summing to n={n} are required")

    @property
    def n(self):
        return SHAPES[self.shape][0]

    @property
    def p(self):
        return SHAPES[self.shape][1]


def activation_pattern(scenario, groups):
    """True activation matrix (n, k0) for a scenario."""
    n = groups.shape[0]
    if scenario == "B":
        return np.zeros((n, 0))
    Psi = np.zeros((n, 3))
    if scenario in ("A", "Astar"):
        Psi[np.arange(n), groups] = 1.0
    elif scenario == "C":
        Psi[groups == 0, 0] = 1.0
        Psi[groups == 1, 1] = 1.0
        Psi[(groups == 1) | (groups == 2), 2] = 1.0
    elif scenario == "D":
        for g in range(3):
            members = np.flatnonzero(groups == g)
            Psi[members[: len(members) // 2], g] = 1.0
    return Psi


def generate_scenario(cfg):
    """Simulate ``(Dataset, SyntheticTruth)`` for a scenario config.

    Loadings are i.i.d. N(0, loading_scale^2); specific loadings are redrawn
    until they have full column rank. Noise variances are inverse gamma.
    Scenario Astar draws exactly the data of scenario A for the same seed.
    """
    rng = np.random.default_rng(cfg.seed)
    n, p = cfg.n, cfg.p
    groups = np.repeat(np.arange(3), cfg.group_sizes)
    Psi = activation_pattern(cfg.scenario, groups)
    k0 = Psi.shape[1]
    # draw the same stream for every scenario so A and Astar coincide
    Lambda = cfg.loading_scale * rng.standard_normal((p, cfg.d0))
    while True:
        Gamma = cfg.loading_scale * rng.standard_normal((p, 3))
        if check_rank_condition(Gamma).holds:
            break
    Gamma = Gamma[:, :k0]
    a, b = cfg.noise_shape_rate
    sigma2 = 1.0 / rng.gamma(a, 1.0 / b, size=p)
    Eta = rng.standard_normal((n, cfg.d0))
    PhiTilde = rng.standard_normal((n, 3))[:, :k0]
    Y = (Eta @ Lambda.T + (Psi * PhiTilde) @ Gamma.T
         + rng.standard_normal((n, p)) * np.sqrt(sigma2))
    truth = SyntheticTruth(Lambda_true=Lambda, Gamma_true=Gamma, Psi_true=Psi,
                           sigma2_true=sigma2, group_labels=groups)
    if cfg.scenario == "Astar":
        dataset = Dataset(Y=Y, X=np.ones((n, 1)), group_names=["all"])
    else:
        dataset = Dataset.from_groups(Y, groups)
    return dataset, truth


def generate_binary(n=600, p=10, seed=0, d0=2, loading_scale=1.0):
    """Probit data from a known structure: two shared factors and the
    scenario-A specific pattern, unit noise variance."""
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(3), [n // 3, n // 3, n - 2 * (n // 3)])
    Psi = activation_pattern("A", groups)
    Lambda = loading_scale * rng.standard_normal((p, d0))
    while True:
        Gamma = loading_scale * rng.standard_normal((p, 3))
        if check_rank_condition(Gamma).holds:
            break
    sigma2 = np.ones(p)
    latent = (rng.standard_normal((n, d0)) @ Lambda.T
              + (Psi * rng.standard_normal((n, 3))) @ Gamma.T
              + rng.standard_normal((n, p)))
    Y = (latent > 0).astype(float)
    truth = SyntheticTruth(Lambda_true=Lambda, Gamma_true=Gamma, Psi_true=Psi,
                           sigma2_true=sigma2, group_labels=groups)
    return Dataset.from_groups(Y, groups, outcome_kind="binary"), truth


def fit_and_evaluate(cfg, hyper=None, chain=None, replicate=0):
    """Generate one replicate, fit it and score it."""
    dataset, truth = generate_scenario(cfg)
    chain = chain or ChainConfig()
    chain = replace(chain, seed=cfg.seed, adapt_end=None)
    start = time.perf_counter()
    draws = run_chain(dataset, hyper or Hyperparameters(), chain)
    runtime = time.perf_counter() - start
    summary = posterior_summary(draws)
    cov = evaluate_covariance_recovery(draws, truth)
    roc = psi_recovery_roc(draws, truth)
    metrics = ReplicateMetrics(
        scenario=cfg.scenario, shape=cfg.shape, replicate=replicate,
        seed=cfg.seed, d_mean=summary["d_mean"], k_mean=summary["k_mean"],
        rv_omega=cov["rv_omega"], rv_shared=cov["rv_shared"],
        auc=roc.auc if roc.auc != NO_POSITIVE_CLASS else NO_POSITIVE_CLASS,
        runtime=runtime)
    metrics.extra = {"draws": draws, "truth": truth, "dataset": dataset,
                     "roc": roc, "summary": summary}
    return metrics


def replicate_study(scenarios=SCENARIOS, shapes=("tall",), R=10, hyper=None,
                    cfg=None, seeds=None, keep_draws=False):
    """Run ``R`` independent replicates of every scenario/shape pair.

    Returns ``{"rows": [...], "aggregate": [...]}``; rows are one per
    replicate in the order scenario, shape, replicate. ``seeds`` defaults
    to ``0..R-1`` and is shared across scenarios.
    """
    seeds = list(range(R)) if seeds is None else list(seeds)
    if len(seeds) != R:
        raise ValueError("need one seed per replicate")
    rows, details = [], []
    for scenario in scenarios:
        for shape in shapes:
            for r, seed in enumerate(seeds):
                metrics = fit_and_evaluate(
                    ScenarioConfig(scenario=scenario, shape=shape, seed=seed),
                    hyper=hyper, chain=cfg, replicate=r)
                rows.append(metrics.row())
                if keep_draws:
                    details.append(metrics)
    report = {"rows": rows, "aggregate": aggregate_rows(rows)}
    if keep_draws:
        report["details"] = details
    return report
