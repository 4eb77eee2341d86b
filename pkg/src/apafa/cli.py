"""Command-line entry point ``apafa`` with subcommands simulate, fit,
evaluate and replicate.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import io
from .evaluation import (evaluate_covariance_recovery,
                         imputation_mse, posterior_summary, psi_recovery_roc)
from .gibbs import posterior_predictive_mean, run_chain
from .identifiability import detect_information_switching
from .model import Dataset, NumericFailure
from .simulation import SCENARIOS, SHAPES, ScenarioConfig, generate_scenario, replicate_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _csv_text(rows):
    keys = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in keys})
    return buf.getvalue()


def _load_config(args):
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        hyper, chain, extra = io.read_config(args.config)
    else:
        hyper, chain, extra = io.config_from_mapping({})
    overrides = {}
    for key in ("iterations", "burn_in", "thinning", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        # re-derive the adaptation window unless the config fixed it
        adapt_end = chain.adapt_end if chain.adapt_end != chain.burn_in else None
        try:
            chain = replace(chain, adapt_end=adapt_end, **overrides)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return hyper, chain, extra


# ------------------------------------------------------------------ simulate

def cmd_simulate(args):
    cfg = ScenarioConfig(scenario=args.scenario, shape=args.shape, seed=args.seed,
                         loading_scale=args.loading_scale)
    dataset, truth = generate_scenario(cfg)
    os.makedirs(args.out, exist_ok=True)
    io.write_dataset_csv(os.path.join(args.out, "Y.csv"), dataset,
                         group_labels=truth.group_labels + 1
                         if args.scenario != "Astar" else None)
    io.write_truth(os.path.join(args.out, "truth.json"), truth)
    meta = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in asdict(cfg).items()}
    meta.update(n=cfg.n, p=cfg.p)
    io.write_json(os.path.join(args.out, "metadata.json"), meta)
    return EXIT_OK


# ----------------------------------------------------------------------- fit

def _holdout(dataset, frac, seed):
    """Mask a random fraction of observed cells; returns the new dataset,
    the held-out mask and the held-out values."""
    rng = np.random.default_rng([seed, 7919])
    observed = np.flatnonzero(~dataset.missing_mask.ravel())
    count = int(round(frac * dataset.Y.size))
    if count < 1 or count > observed.size:
        raise UsageError(f"--holdout-frac {frac} selects {count} cells")
    cells = np.sort(rng.choice(observed, size=count, replace=False))
    held = np.zeros(dataset.Y.size, dtype=bool)
    held[cells] = True
    held = held.reshape(dataset.Y.shape)
    values = dataset.Y[held].copy()
    masked = Dataset(Y=dataset.Y, X=dataset.X, Z=dataset.Z,
                     missing_mask=dataset.missing_mask | held,
                     outcome_kind=dataset.outcome_kind,
                     group_names=dataset.group_names)
    return masked, held, values


def cmd_fit(args):
    if not 0 <= args.holdout_frac < 1:
        raise UsageError("--holdout-frac must lie in [0, 1)")
    hyper, chain, extra = _load_config(args)
    labels = args.labels.split(",") if args.labels else extra.get("group_labels")
    if isinstance(labels, str):
        labels = [x.strip() for x in labels.split(",") if x.strip()]
    try:
        dataset = io.read_dataset_csv(args.data, binary=args.binary, labels=labels,
                                      strict_labels=args.strict_labels)
    except FileNotFoundError as exc:
        raise UsageError(f"data file not found: {args.data}") from exc
    held, values = None, None
    if args.holdout_frac > 0:
        dataset, held, values = _holdout(dataset, args.holdout_frac, chain.seed)
    draws = run_chain(dataset, hyper, chain)
    os.makedirs(args.out, exist_ok=True)
    io.write_draws(os.path.join(args.out, "draws.bin"), draws)

    summary = posterior_summary(draws)
    out = {"d_mean": summary["d_mean"], "d_iqr": summary["d_iqr"],
           "k_mean": summary["k_mean"], "k_iqr": summary["k_iqr"],
           "psi_mean": summary["psi_mean"], "lambda_mean": summary["lambda_mean"],
           "gamma_mean": summary["gamma_mean"], "draws": summary["draws"],
           "group_names": [str(g) for g in dataset.group_names]}
    if held is not None:
        # held cells sit inside the augmented missing mask
        sub = held[dataset.missing_mask]
        pred = posterior_predictive_mean(draws, dataset)[sub]
        observed = np.where(dataset.missing_mask, np.nan, dataset.Y)
        col_var = np.nanvar(observed, axis=0)
        col_mean = np.nanmean(observed, axis=0)
        baseline = float(np.mean((col_mean[np.nonzero(held)[1]] - values) ** 2))
        out["holdout"] = {"cells": int(held.sum()),
                          "mse": imputation_mse(pred, values),
                          "baseline_mse": baseline,
                          "column_variance_mean": float(np.mean(col_var))}
    io.write_json(os.path.join(args.out, "summary.json"), out)
    io.write_json(os.path.join(args.out, "diagnostics.json"), {
        "timings": draws.meta.get("timings", {}),
        "runtime": draws.meta.get("runtime"),
        "information_switching": detect_information_switching(draws),
        "hyperparameters": asdict(hyper.resolved(dataset.p)),
        "chain": asdict(chain)})
    return EXIT_OK


# ------------------------------------------------------------------ evaluate

def _evaluation_rows(draws, truth):
    summary = posterior_summary(draws)
    cov = evaluate_covariance_recovery(draws, truth)
    roc = psi_recovery_roc(draws, truth)
    metrics = {"d": summary["d_mean"], "d_iqr": summary["d_iqr"],
               "k": summary["k_mean"], "k_iqr": summary["k_iqr"]}
    for g, rv in enumerate(cov["rv_omega"], start=1):
        metrics[f"rv_omega_{g}"] = rv
    metrics["rv_shared"] = cov["rv_shared"]
    metrics["auc"] = roc.auc
    roc_rows = ([] if roc.fpr is None else
                [{"threshold": float(t) if np.isfinite(t) else None, "fpr": float(f), "tpr": float(r)}
                 for f, r, t in zip(roc.fpr, roc.tpr, roc.thresholds)])
    return metrics, roc_rows


def cmd_evaluate(args):
    os.makedirs(args.out, exist_ok=True)
    if args.report:
        with open(args.report) as fh:
            report = json.load(fh)
        table = [r for r in report.get("aggregate", [])]
        io.write_json(os.path.join(args.out, "table.json"), table)
        io.atomic_write(os.path.join(args.out, "table.csv"), _csv_text(table))
        return EXIT_OK
    if not (args.draws and args.truth):
        raise UsageError("evaluate needs --draws and --truth, or --report")
    draws = io.read_draws(args.draws)
    truth = io.read_truth(args.truth)
    metrics, roc_rows = _evaluation_rows(draws, truth)
    io.write_json(os.path.join(args.out, "metrics.json"),
                  {"metrics": metrics, "roc": roc_rows})
    io.atomic_write(os.path.join(args.out, "metrics.csv"), _csv_text([metrics]))
    if roc_rows:
        io.atomic_write(os.path.join(args.out, "roc.csv"), _csv_text(roc_rows))
    return EXIT_OK


# ----------------------------------------------------------------- replicate

def cmd_replicate(args):
    hyper, chain, _ = _load_config(args)
    scenarios = args.scenarios.split(",")
    shapes = args.shapes.split(",")
    for s in scenarios:
        if s not in SCENARIOS:
            raise UsageError(f"unknown scenario {s!r}")
    for s in shapes:
        if s not in SHAPES:
            raise UsageError(f"unknown shape {s!r}")
    seeds = ([int(x) for x in args.seeds.split(",")] if args.seeds
             else list(range(args.R)))
    report = replicate_study(scenarios, shapes, R=len(seeds), hyper=hyper,
                             cfg=chain, seeds=seeds)
    os.makedirs(args.out, exist_ok=True)
    io.write_json(os.path.join(args.out, "report.json"), report)
    io.atomic_write(os.path.join(args.out, "report.csv"),
                    _csv_text(report["rows"] + report["aggregate"]))
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="apafa", description="Adaptive partition factor analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--shape", default="tall", choices=tuple(SHAPES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loading-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def chain_flags(q):
        q.add_argument("--config", help="key = value file")
        q.add_argument("--iterations", type=int)
        q.add_argument("--burn-in", dest="burn_in", type=int)
        q.add_argument("--thinning", type=int)

    p = sub.add_parser("fit", help="run the sampler on a data CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--binary", action="store_true", help="probit outcomes")
    p.add_argument("--holdout-frac", type=float, default=0.0)
    p.add_argument("--labels", help="declared group labels, comma separated")
    p.add_argument("--strict-labels", action="store_true")
    chain_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score draws against a truth file")
    p.add_argument("--draws")
    p.add_argument("--truth")
    p.add_argument("--report", help="replicate report.json to tabulate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replicate", help="replicated simulation study")
    p.add_argument("--scenarios", default=",".join(SCENARIOS))
    p.add_argument("--shapes", default="tall")
    p.add_argument("--R", type=int, default=10)
    p.add_argument("--seeds", help="comma-separated seeds (overrides --R)")
    p.add_argument("--out", required=True)
    chain_flags(p)
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, io.FormatError) as exc:
        print(f"apafa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"apafa {args.command}: numeric failure: {exc} "
              f"(component={exc.component}, iteration={exc.iteration})",
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
