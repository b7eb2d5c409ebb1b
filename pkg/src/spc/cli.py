"""Command-line entry point: ``spc simulate | check | theory``."""

from __future__ import annotations

import argparse
import json
import sys

from . import theory
from .checks import METHODS, CheckConfig
from .core import SpcError
from .harness import ExperimentConfig, check_csv, run_experiment


def _simulate(args) -> int:
    doc = _raw(args.config)
    if args.workers is not None:
        doc["parallelism"] = args.workers
    cfg = ExperimentConfig.from_dict(doc)
    out = args.out or cfg.output
    if not out:
        raise SpcError("no output directory: pass --out or set 'output' in the config")
    report = run_experiment(cfg)
    report.write(out)
    for row in report.rows:
        print(f"{row['truth']:>10}  {row['method']:<32} {row['statistic']:<26} N={row['N']:<6} "
              f"rate={row['estimate']:.3f} [{row['ci_low']:.3f}, {row['ci_high']:.3f}]")
    if report.errors:
        print(f"{len(report.errors)} failed replications; see errors.csv", file=sys.stderr)
    return 0


def _raw(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _check(args) -> int:
    cfg = CheckConfig(
        method=args.method,
        statistic=args.statistic,
        q=args.q,
        k=args.k,
        beta=args.beta,
        split=args.split,
        folds=args.folds,
        mc_samples=args.mc,
        tie_mode=args.tie_mode,
    )
    res = check_csv(args.data, args.model, cfg, args.seed)
    doc = {
        "method": args.method,
        "statistic": cfg.statistic.name,
        "p": res.p.value,
        "p_two_sided": res.p_two_sided.value,
        "fold_pvalues": None if res.fold_pvalues is None else [p.value for p in res.fold_pvalues],
        "diagnostics": res.diagnostics,
    }
    print(json.dumps(doc, indent=2, default=str))
    return 0


def _parse_scenario(text: str):
    name, _, args = text.partition(":")
    params = {}
    for item in filter(None, args.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise SpcError(f"bad scenario argument {item!r}")
        params[key.strip()] = float(value)
    return name, params


def _theory(args) -> int:
    name, params = _parse_scenario(args.scenario)
    rho = theory.rho_scenarios(name, **params)
    doc = {
        "scenario": name,
        "params": params,
        "q": args.q,
        "alpha": args.alpha,
        "rho": rho,
        "rho_squared": rho * rho,
        "rejection_prob_one_sided": theory.asym_rejection_prob(args.alpha, rho),
        "power_two_sided": theory.asym_power_two_sided(args.alpha, rho),
    }
    print(json.dumps(doc, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spc", description="Split predictive checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a size/power study from a JSON config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides the config's 'output')")
    p.add_argument("--workers", type=int, help="worker processes (overrides 'parallelism')")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("check", help="run one predictive check on a CSV file")
    p.add_argument("--data", required=True, help="CSV with a 'value' column")
    p.add_argument("--model", required=True, help="e.g. poisson_gamma:shape=0.1,rate=0.2")
    p.add_argument("--statistic", required=True, help="e.g. mean, quantile:0.75")
    p.add_argument("--method", required=True, choices=[m for m in METHODS if m != "pop_pc_v1"])
    p.add_argument("--q", type=float, default=0.5)
    fold = p.add_mutually_exclusive_group()
    fold.add_argument("--k", type=int, help="explicit fold count")
    fold.add_argument("--beta", type=float, default=0.49, help="fold rule exponent")
    p.add_argument("--split", help="inner split strategy, e.g. iid_random, hier_within")
    p.add_argument("--folds", help="fold formation: random, cross, within, contiguous, strided")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc", type=int, default=1000, help="posterior predictive replicates")
    p.add_argument("--tie-mode", choices=("strict", "midp"), default="strict")
    p.set_defaults(func=_check)

    p = sub.add_parser("theory", help="asymptotic rejection rates for a scenario")
    p.add_argument("--scenario", required=True,
                   help="e.g. negbin:tau=0.01, binomial:p=0.8, gaussian_mse:sigma_star=15,sigma=1")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--q", type=float, default=0.5)
    p.set_defaults(func=_theory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpcError, ValueError, OSError) as exc:
        print(f"spc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
