"""Predictive checks: PPC, POP-PC-v1, single and divided split predictive checks.

Random streams inside one check are laid out as::

    seed.child(0)              split / fold formation
    seed.child(1)              posterior draws (full-data methods)
    seed.child(2, h)           replicates for the statistic with name hash h
    seed.child(3, r)           r-th fresh dataset (POP-PC-v1)
    seed.child(1, j)           everything for fold j, recursively (divided SPC)

Keying replicate streams by the statistic's name means several statistics
can share one posterior fit while each p-value stays identical to the one
computed on its own.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    GroupedDataset,
    InvalidParameter,
    PValue,
    ShapeMismatch,
    TimeSeriesDataset,
    TooManyFolds,
    TruthUnavailable,
    as_seed,
    two_sided,
)
from .splits import HierCross, make_folds, k_from_rule, parse_strategy, split
from .statistics import CustomStatistic, Statistic, evaluate_batch, parse_statistic
from .uniformity import ks_test

__all__ = [
    "METHODS",
    "CheckConfig",
    "CheckResult",
    "exceedance_pvalue",
    "ppc",
    "pop_pc_v1",
    "single_spc",
    "divided_spc",
    "run_check",
    "resolve_k",
]

METHODS = ("ppc", "pop_pc_v1", "single_spc", "divided_spc")
MIN_MC_SAMPLES = 100


@dataclass(frozen=True)
class CheckConfig:
    """Settings for one predictive check.

    Attributes
    ----------
    method : one of ``METHODS``
    statistic : Statistic, CustomStatistic or a config name such as ``"quantile:0.75"``
    q : observed proportion for split checks
    k : explicit fold count; when ``None`` it follows ``floor(b * n**beta)``
    split : inner split strategy name; defaults by data type
        (``iid_random``, ``hier_cross`` or ``ts_extrapolated``)
    folds : fold formation for divided checks (``random``, ``cross``,
        ``within``, ``contiguous``, ``strided``); defaults by data type
    mc_samples : posterior predictive replicates ``S``
    tie_mode : ``strict`` counts ``T(x) > T(Y)`` only; ``midp`` adds half the ties
    ks_method : ``exact`` or ``asymptotic`` KS p-values for divided checks
    n_new : fresh datasets averaged over by POP-PC-v1
    """

    method: str = "single_spc"
    statistic: object = "mean"
    q: float = 0.5
    k: Optional[int] = None
    b: float = 1.0
    beta: float = 0.49
    split: Optional[str] = None
    folds: Optional[str] = None
    mc_samples: int = 1000
    tie_mode: str = "strict"
    ks_method: str = "exact"
    n_new: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameter(f"method must be one of {METHODS}, got {self.method!r}")
        if isinstance(self.statistic, str):
            object.__setattr__(self, "statistic", parse_statistic(self.statistic))
        if not isinstance(self.statistic, (Statistic, CustomStatistic)):
            raise InvalidParameter("statistic must be a Statistic or CustomStatistic")
        if not 0.0 < self.q < 1.0:
            raise InvalidParameter("q must lie in (0, 1)")
        if self.k is not None and int(self.k) < 2:
            raise InvalidParameter("k must be at least 2")
        if int(self.mc_samples) < MIN_MC_SAMPLES:
            raise InvalidParameter(f"mc_samples must be at least {MIN_MC_SAMPLES}")
        if self.tie_mode not in ("strict", "midp"):
            raise InvalidParameter("tie_mode must be 'strict' or 'midp'")
        if self.ks_method not in ("exact", "asymptotic"):
            raise InvalidParameter("ks_method must be 'exact' or 'asymptotic'")
        if int(self.n_new) < 1:
            raise InvalidParameter("n_new must be positive")


@dataclass(frozen=True)
class CheckResult:
    p: PValue
    p_two_sided: PValue
    fold_pvalues: Optional[tuple] = None
    diagnostics: dict = field(default_factory=dict)


def exceedance_pvalue(t_obs, t_rep, tie_mode: str = "strict") -> float:
    """Fraction of replicates with ``t_obs > t_rep``; ``midp`` counts ties as half."""
    t_rep = np.asarray(t_rep, dtype=float)
    t_obs = np.broadcast_to(np.asarray(t_obs, dtype=float), t_rep.shape)
    count = float(np.count_nonzero(t_obs > t_rep))
    if tie_mode == "midp":
        count += 0.5 * np.count_nonzero(t_obs == t_rep)
    elif tie_mode != "strict":
        raise InvalidParameter("tie_mode must be 'strict' or 'midp'")
    return count / t_rep.size


def _stat_stream(seed, stat):
    return seed.child(2, zlib.crc32(stat.name.encode("utf-8")))


@dataclass(frozen=True)
class _Plan:
    fit: object
    target: object
    mode: str
    group_ids: Optional[np.ndarray]
    n_fit: int
    n_target: int


def _default_split(data) -> str:
    if isinstance(data, GroupedDataset):
        return "hier_cross"
    if isinstance(data, TimeSeriesDataset):
        return "ts_extrapolated"
    return "iid_random"


def _default_folds(data) -> str:
    if isinstance(data, GroupedDataset):
        return "cross"
    if isinstance(data, TimeSeriesDataset):
        return "contiguous"
    return "random"


def _spc_plan(data, cfg, seed, split_result=None) -> _Plan:
    strategy = parse_strategy(cfg.split or _default_split(data), cfg.q)
    res = split_result if split_result is not None else split(data, strategy, seed.child(0))
    fit, target = res.apply(data)
    mode, ids = "within", None
    if isinstance(strategy, HierCross):
        mode = "new"
    elif isinstance(data, GroupedDataset):
        fit_groups = data.kept_groups(res.observed_indices)
        target_groups = data.kept_groups(res.heldout_indices)
        if not np.all(np.isin(target_groups, fit_groups)):
            raise ShapeMismatch("held-out groups without observed data; use hier_cross")
        ids = np.searchsorted(fit_groups, target_groups)
    return _Plan(fit, target, mode, ids, len(fit), len(target))


def _observed_statistic(stat, model, draws, plan):
    values = plan.target.values[None, :]
    if stat.parameter_dependent:
        cond = model.conditional_mean(draws, plan.target, plan.group_ids)
        return evaluate_batch(stat, values, plan.target, cond_mean=cond)
    return evaluate_batch(stat, values, plan.target)[0]


def _plan_pvalues(model, draws, plan, stats, seed, cfg) -> list:
    out = []
    for stat in stats:
        rng = _stat_stream(seed, stat).generator()
        t_rep = model.replicate_statistics(stat, draws, plan.target, rng, plan.mode, plan.group_ids)
        t_obs = _observed_statistic(stat, model, draws, plan)
        out.append(exceedance_pvalue(t_obs, t_rep, cfg.tie_mode))
    return out


def _result(p: float, mc: int, diagnostics: dict, folds=None) -> CheckResult:
    pv = PValue(p, mc)
    return CheckResult(pv, two_sided(pv), folds, diagnostics)


def _base_diag(cfg, seed, data) -> dict:
    return {
        "method": cfg.method,
        "n_obs": len(data),
        "mc_samples": int(cfg.mc_samples),
        "seed": [seed.master_seed, list(seed.stream_path)],
        "warnings": [],
    }


def resolve_k(data, cfg) -> int:
    """Fold count for a divided check on ``data``.

    Cross folds count groups; within folds are also capped so that every
    group keeps at least two observations per fold.
    """
    if cfg.k is not None:
        return int(cfg.k)
    formation = cfg.folds or _default_folds(data)
    if formation == "cross":
        return k_from_rule(data.n_groups, cfg.b, cfg.beta)
    k = k_from_rule(len(data), cfg.b, cfg.beta)
    if formation == "within":
        cap = int(data.sizes.min()) // 2
        if cap < 2:
            raise TooManyFolds("within folds need groups of at least 4 observations")
        k = min(k, cap)
    return k


def _full_data(model, data, cfg, seed, diag):
    draws = model.sample_posterior(data, int(cfg.mc_samples), seed.child(1).generator())
    plan = _Plan(data, data, "within", None, len(data), len(data))
    diag.update(n_fit=len(data), n_heldout=len(data))
    return draws, plan


def _run_ppc(model, data, cfg, seed, stats, truth):
    diag = _base_diag(cfg, seed, data)
    draws, plan = _full_data(model, data, cfg, seed, diag)
    ps = _plan_pvalues(model, draws, plan, stats, seed, cfg)
    return [_result(p, cfg.mc_samples, dict(diag)) for p in ps]


def _run_pop(model, data, cfg, seed, stats, truth):
    if truth is None:
        raise TruthUnavailable("POP-PC-v1 needs the data-generating distribution")
    diag = _base_diag(cfg, seed, data)
    draws, plan = _full_data(model, data, cfg, seed, diag)
    fresh = [truth.sample(data, seed.child(3, r).generator()) for r in range(int(cfg.n_new))]
    diag["n_new"] = int(cfg.n_new)
    out = []
    for stat in stats:
        rng = _stat_stream(seed, stat).generator()
        t_rep = model.replicate_statistics(stat, draws, data, rng, plan.mode, plan.group_ids)
        # Pr{T(Y) > T(X_new)}: same comparison with the roles swapped
        frac = []
        for x_new in fresh:
            new_plan = _Plan(data, x_new, "within", None, len(data), len(x_new))
            t_new = _observed_statistic(stat, model, draws, new_plan)
            frac.append(exceedance_pvalue(-np.asarray(t_new), -np.asarray(t_rep), cfg.tie_mode))
        p = float(np.mean(frac))
        out.append(_result(p, int(cfg.mc_samples) * int(cfg.n_new), dict(diag)))
    return out


def _run_single(model, data, cfg, seed, stats, truth, split_result=None):
    diag = _base_diag(cfg, seed, data)
    plan = _spc_plan(data, cfg, seed, split_result)
    draws = model.sample_posterior(plan.fit, int(cfg.mc_samples), seed.child(1).generator())
    diag.update(n_fit=plan.n_fit, n_heldout=plan.n_target, split=cfg.split or _default_split(data))
    ps = _plan_pvalues(model, draws, plan, stats, seed, cfg)
    return [_result(p, cfg.mc_samples, dict(diag)) for p in ps]


def _run_divided(model, data, cfg, seed, stats, truth):
    diag = _base_diag(cfg, seed, data)
    k = resolve_k(data, cfg)
    formation = cfg.folds or _default_folds(data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = make_folds(data, k, formation, seed.child(0))
    diag["warnings"].extend(str(w.message) for w in caught)
    fold_seeds = [seed.child(1, j) for j in range(k)]
    plans = [_spc_plan(data.subset(f), cfg, s) for f, s in zip(plan.folds, fold_seeds)]
    posteriors = model.sample_posterior_many(
        [p.fit for p in plans], int(cfg.mc_samples), [s.child(1) for s in fold_seeds]
    )
    per_fold = [
        _plan_pvalues(model, draws, p, stats, s, cfg)
        for draws, p, s in zip(posteriors, plans, fold_seeds)
    ]
    diag.update(
        k=k,
        folds=formation,
        split=cfg.split or _default_split(data),
        fold_unit_size=plan.unit_size,
        n_dropped=int(plan.dropped.size),
        n_fit=plans[0].n_fit,
        n_heldout=plans[0].n_target,
    )
    out = []
    for i, stat in enumerate(stats):
        fold_ps = [row[i] for row in per_fold]
        d = dict(diag, warnings=list(diag["warnings"]))
        if len(set(fold_ps)) == 1:
            msg = f"all {k} fold p-values equal {fold_ps[0]} for {stat.name}"
            d["warnings"].append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        report = ks_test(fold_ps, cfg.ks_method)
        d["warnings"].extend(report.warnings)
        d.update(ks_D=report.D, ks_scaled=report.scaled)
        folds = tuple(PValue(p, cfg.mc_samples) for p in fold_ps)
        out.append(CheckResult(report.p, two_sided(report.p), folds, d))
    return out


_RUNNERS = {
    "ppc": _run_ppc,
    "pop_pc_v1": _run_pop,
    "single_spc": _run_single,
    "divided_spc": _run_divided,
}


def run_check(model, data, cfg: CheckConfig, seed=None, statistics=None, truth=None) -> list:
    """Run ``cfg.method`` once for several statistics sharing the posterior fits.

    Returns one ``CheckResult`` per statistic, in order. Each result equals
    what the method would return for that statistic alone.
    """
    seed = as_seed(seed)
    stats = [cfg.statistic] if statistics is None else [
        parse_statistic(s) if isinstance(s, str) else s for s in statistics
    ]
    if not stats:
        raise InvalidParameter("no statistics requested")
    return _RUNNERS[cfg.method](model, data, cfg, seed, stats, truth)


def ppc(model, data, cfg: CheckConfig, seed=None) -> CheckResult:
    """Posterior predictive check: the posterior is fit on all of ``data``."""
    return _run_ppc(model, data, cfg, as_seed(seed), [cfg.statistic], None)[0]


def pop_pc_v1(model, data, truth, cfg: CheckConfig, seed=None) -> CheckResult:
    """Population predictive check against fresh draws from ``truth``.

    Averages, over ``cfg.n_new`` fresh datasets, the fraction of posterior
    predictive replicates whose statistic exceeds the fresh data's. The
    default ``n_new = 1`` gives the single-draw estimator.
    """
    return _run_pop(model, data, cfg, as_seed(seed), [cfg.statistic], truth)[0]


def single_spc(model, data, cfg: CheckConfig, seed=None, split_result=None) -> CheckResult:
    """Single split predictive check.

    The posterior is fit on the observed part only and replicates take the
    held-out part's shape: fresh groups for ``hier_cross``, the same groups
    for ``hier_within``. ``split_result`` overrides the seeded split.
    """
    return _run_single(model, data, cfg, as_seed(seed), [cfg.statistic], None, split_result)[0]


def divided_spc(model, data, cfg: CheckConfig, seed=None) -> CheckResult:
    """Divided split predictive check: KS uniformity test of per-fold SPC p-values.

    Fold ``j`` runs exactly ``single_spc(model, fold_j, cfg, seed.child(1, j))``.
    """
    return _run_divided(model, data, cfg, as_seed(seed), [cfg.statistic], None)[0]
