"""Monte Carlo studies of test size and power, CSV ingestion and report files.

Randomness in ``run_experiment`` is addressed by position, never by
execution order::

    data for (truth t, size N, replication r)      [t, N, r, 0]
    check for method m on that dataset             [t, N, r, 1, m]

so the output is identical for any ``parallelism``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import models as M
from .checks import CheckConfig, run_check
from .core import (
    GroupedDataset,
    IidDataset,
    InvalidParameter,
    NonMonotoneIndex,
    SeedSpec,
    SpcError,
    TimeSeriesDataset,
    ValidationError,
    as_seed,
)
from .statistics import parse_statistic

__all__ = [
    "ConfigError",
    "ParseError",
    "SchemaMismatch",
    "ExperimentConfig",
    "ExperimentReport",
    "SegmentationResult",
    "REPORT_HEADER",
    "parse_model",
    "parse_truth",
    "estimate_rate",
    "qq_points",
    "run_experiment",
    "run_airline_style_segmentation",
    "read_csv",
    "check_csv",
]

REPORT_HEADER = ("method", "statistic", "N", "q", "k", "alpha", "estimate", "ci_low", "ci_high",
                 "reps", "seed")


class ConfigError(InvalidParameter):
    pass


class ParseError(SpcError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class SchemaMismatch(SpcError, ValueError):
    pass


# -- spec strings -----------------------------------------------------------------

_MODELS = {
    "poisson_gamma": M.PoissonGamma,
    "normal_known_var": M.NormalKnownVar,
    "normal_improper": M.NormalImproper,
    "geometric_beta": M.GeometricBeta,
    "gaussian_hier": M.GaussianHierarchical,
}

_TRUTHS = {
    "poisson": M.Poisson,
    "negbin": M.NegBinMeanDispersion,
    "binomial": M.BinomialScaled,
    "normal": M.Normal,
    "geometric": M.GeometricTruth,
    "hier": M.HierScenario,
}


def _parse_spec(text: str, table: dict, what: str):
    """Build ``table[family](**kwargs)`` from ``family:key=value,...``."""
    family, _, args = text.strip().partition(":")
    if family not in table:
        raise ConfigError(f"unknown {what} {family!r}; expected one of {sorted(table)}")
    cls = table[family]
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for item in filter(None, (a.strip() for a in args.split(","))):
        key, eq, raw = item.partition("=")
        if not eq or key not in names:
            raise ConfigError(f"bad {what} argument {item!r} for {family}")
        kwargs[key] = raw if key == "scenario" else _number(raw)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{what} {family}: {exc}") from None


def _number(raw: str):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None
    return int(value) if value.is_integer() and "." not in raw and "e" not in raw.lower() else value


def parse_model(text):
    """Model from a spec such as ``poisson_gamma:shape=0.1,rate=0.2``."""
    return text if not isinstance(text, str) else _parse_spec(text, _MODELS, "model")


def parse_truth(text):
    """Truth from a spec such as ``negbin:mean=2,dispersion=0.01``."""
    return text if not isinstance(text, str) else _parse_spec(text, _TRUTHS, "truth")


# -- rates and Q-Q points -----------------------------------------------------------

_Z95 = float(special.ndtri(0.975))


def estimate_rate(pvalues, alpha: float = 0.05):
    """Fraction of p-values below ``alpha`` with a 95% Wilson interval.

    NaN entries (failed replications) are ignored.
    """
    p = np.asarray(pvalues, dtype=float).ravel()
    p = p[~np.isnan(p)]
    if p.size == 0:
        raise InvalidParameter("no p-values to summarize")
    n = p.size
    rate = np.count_nonzero(p < alpha) / n
    z2 = _Z95**2
    denom = 1.0 + z2 / n
    centre = (rate + z2 / (2 * n)) / denom
    half = _Z95 / denom * math.sqrt(rate * (1 - rate) / n + z2 / (4 * n * n))
    return rate, max(0.0, centre - half), min(1.0, centre + half)


def qq_points(pvalues) -> np.ndarray:
    """Rows ``((i - 0.5) / n, p_(i))`` against the uniform quantiles."""
    p = np.sort(np.asarray(pvalues, dtype=float).ravel())
    if p.size == 0:
        raise InvalidParameter("no p-values")
    u = (np.arange(1, p.size + 1) - 0.5) / p.size
    return np.column_stack([u, p])


# -- experiment config --------------------------------------------------------------

_METHOD_FIELDS = {f.name for f in dataclasses.fields(CheckConfig)} - {"statistic"}


def _method_label(m: dict) -> str:
    method = m["method"]
    if method == "single_spc" and m.get("split"):
        return f"single_spc[{m['split']}]"
    if method == "divided_spc" and (m.get("split") or m.get("folds")):
        return f"divided_spc[{m.get('folds') or 'default'}/{m.get('split') or 'default'}]"
    return method


@dataclass(frozen=True)
class ExperimentConfig:
    """A grid of (truth, N, method, statistic) cells with ``replications`` each.

    ``truths`` maps a label to a truth spec; each label gets its own output
    directory. For hierarchical truths ``n_grid`` counts groups.
    """

    model: object
    truths: dict
    statistics: tuple
    methods: tuple
    n_grid: tuple
    replications: int = 1000
    alpha: float = 0.05
    master_seed: int = 0
    parallelism: int = 1
    two_sided: bool = True
    output: str = None

    def __post_init__(self):
        object.__setattr__(self, "model", parse_model(self.model))
        truths = {str(k): parse_truth(v) for k, v in dict(self.truths).items()}
        object.__setattr__(self, "truths", truths)
        stats = tuple(parse_statistic(s) if isinstance(s, str) else s for s in self.statistics)
        object.__setattr__(self, "statistics", stats)
        methods = []
        for m in self.methods:
            m = dict(m)
            unknown = set(m) - _METHOD_FIELDS - {"label"}
            if unknown:
                raise ConfigError(f"unknown method fields {sorted(unknown)}")
            label = m.pop("label", None) or _method_label(m)
            methods.append((label, CheckConfig(**m)))
        object.__setattr__(self, "methods", tuple(methods))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not (truths and stats and methods and self.n_grid):
            raise ConfigError("truths, statistics, methods and n_grid must be nonempty")
        if len({label for label, _ in methods}) != len(methods):
            raise ConfigError("method labels must be unique")
        if int(self.replications) < 50:
            raise ConfigError("replications must be at least 50")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if int(self.parallelism) < 1:
            raise ConfigError("parallelism must be positive")
        SeedSpec(self.master_seed)

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)} | {"truth"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "truth" in doc:
            if "truths" in doc:
                raise ConfigError("give either 'truth' or 'truths', not both")
            doc["truths"] = {"truth": doc.pop("truth")}
        for key in ("model", "truths", "statistics", "methods", "n_grid"):
            if key not in doc:
                raise ConfigError(f"missing config field {key!r}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        """JSON-friendly echo of the resolved configuration."""

        def spec(obj):
            return {"family": type(obj).__name__, **dataclasses.asdict(obj)}

        def method(label, cfg):
            d = dataclasses.asdict(cfg)
            d.pop("statistic")
            return {"label": label, **d}

        return {
            "model": spec(self.model),
            "truths": {k: spec(v) for k, v in self.truths.items()},
            "statistics": [s.name for s in self.statistics],
            "methods": [method(label, cfg) for label, cfg in self.methods],
            "n_grid": list(self.n_grid),
            "replications": int(self.replications),
            "alpha": self.alpha,
            "master_seed": int(self.master_seed),
            "parallelism": int(self.parallelism),
            "two_sided": bool(self.two_sided),
            "stream_layout": {"data": "[truth, N, replication, 0]",
                              "check": "[truth, N, replication, 1, method]"},
        }


# -- experiment runner --------------------------------------------------------------


def _cell_id(label: str, stat: str, n: int) -> str:
    return f"{label}/{stat}/N{n}"


def _sized_truth(truth, n):
    if isinstance(truth, M.HierScenario):
        return dataclasses.replace(truth, n_groups=n), None
    return truth, n


def _replication_block(cfg: ExperimentConfig, t_index: int, n: int, reps) -> list:
    """Run every method on the datasets of replications ``reps``."""
    truth, shape = _sized_truth(list(cfg.truths.values())[t_index], n)
    out = []
    for r in reps:
        base = SeedSpec(cfg.master_seed, (t_index, n, r))
        try:
            data = truth.sample(shape, base.child(0).generator())
        except SpcError as exc:
            out.extend((r, m, None, str(exc)) for m in range(len(cfg.methods)))
            continue
        for m, (_, check_cfg) in enumerate(cfg.methods):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    results = run_check(cfg.model, data, check_cfg, base.child(1, m),
                                        statistics=cfg.statistics, truth=truth)
                out.append((r, m, [(res.p.value, res.p_two_sided.value,
                                    res.diagnostics.get("k")) for res in results], None))
            except (SpcError, FloatingPointError, np.linalg.LinAlgError) as exc:
                out.append((r, m, None, f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class ExperimentReport:
    """Aggregated rates plus the raw p-values behind them.

    ``rows`` carry a ``truth`` key on top of the report columns;
    ``pvalues[(truth, cell_id)]`` holds ``(p, p_two_sided)`` arrays with NaN
    for failed replications.
    """

    config: ExperimentConfig
    rows: list = field(default_factory=list)
    pvalues: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def rows_for(self, truth: str) -> list:
        return [r for r in self.rows if r["truth"] == truth]

    def rate(self, truth: str, method: str, statistic: str, n: int) -> dict:
        for row in self.rows:
            if (row["truth"], row["method"], row["statistic"], row["N"]) == (
                truth, method, statistic, n
            ):
                return row
        raise KeyError((truth, method, statistic, n))

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "run.json", "w", encoding="utf-8") as fh:
            json.dump(self.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for truth in self.config.truths:
            sub = out / truth
            sub.mkdir(exist_ok=True)
            with open(sub / "report.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(REPORT_HEADER)
                for row in self.rows_for(truth):
                    w.writerow([_fmt(row[c]) for c in REPORT_HEADER])
            cells = [(cid, arr) for (t, cid), arr in self.pvalues.items() if t == truth]
            with open(sub / "pvalues.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(("cell_id", "replication", "p", "p_two_sided"))
                for cid, (p, p2) in cells:
                    for r in range(p.size):
                        w.writerow((cid, r, _fmt(p[r]), _fmt(p2[r])))
            with open(sub / "qq.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(("cell_id", "u", "p_sorted"))
                for cid, (p, _) in cells:
                    ok = p[~np.isnan(p)]
                    if ok.size:
                        for u, ps in qq_points(ok):
                            w.writerow((cid, _fmt(u), _fmt(ps)))
            errs = [e for e in self.errors if e[0] == truth]
            if errs:
                with open(sub / "errors.csv", "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh)
                    w.writerow(("cell_id", "replication", "error"))
                    w.writerows(e[1:] for e in errs)
        return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Estimate rejection rates for every cell of the grid.

    A replication whose check fails leaves NaN p-values in that method's
    cells and an entry in ``errors``; ``reps`` counts the successes.
    """
    n_reps = int(cfg.replications)
    n_workers = int(cfg.parallelism)
    report = ExperimentReport(cfg)
    stat_names = [s.name for s in cfg.statistics]
    n_methods, n_stats = len(cfg.methods), len(stat_names)

    for t_index, truth_label in enumerate(cfg.truths):
        for n in cfg.n_grid:
            p = np.full((n_methods, n_stats, n_reps), np.nan)
            p2 = np.full_like(p, np.nan)
            ks = [None] * n_methods
            blocks = np.array_split(np.arange(n_reps), max(1, min(n_reps, 4 * n_workers)))
            if n_workers == 1:
                results = [_replication_block(cfg, t_index, n, b) for b in blocks]
            else:
                with ProcessPoolExecutor(max_workers=n_workers) as pool:
                    futures = [pool.submit(_replication_block, cfg, t_index, n, b) for b in blocks]
                    results = [f.result() for f in futures]
            for block in results:
                for r, m, values, err in block:
                    if values is None:
                        for s in stat_names:
                            cid = _cell_id(cfg.methods[m][0], s, n)
                            report.errors.append((truth_label, cid, int(r), err))
                        continue
                    for s, (pv, pv2, k) in enumerate(values):
                        p[m, s, r], p2[m, s, r] = pv, pv2
                        if k is not None and ks[m] is None:
                            ks[m] = int(k)
            for m, (label, check_cfg) in enumerate(cfg.methods):
                for s, stat in enumerate(stat_names):
                    cid = _cell_id(label, stat, n)
                    report.pvalues[(truth_label, cid)] = (p[m, s].copy(), p2[m, s].copy())
                    used = p2[m, s] if cfg.two_sided else p[m, s]
                    ok = int(np.count_nonzero(~np.isnan(used)))
                    if ok:
                        rate, lo, hi = estimate_rate(used, cfg.alpha)
                    else:
                        rate = lo = hi = float("nan")
                    spc = check_cfg.method in ("single_spc", "divided_spc")
                    report.rows.append({
                        "truth": truth_label,
                        "cell_id": cid,
                        "method": label,
                        "statistic": stat,
                        "N": n,
                        "q": check_cfg.q if spc else None,
                        "k": ks[m],
                        "alpha": cfg.alpha,
                        "estimate": rate,
                        "ci_low": lo,
                        "ci_high": hi,
                        "reps": ok,
                        "seed": int(cfg.master_seed),
                    })
    return report


# -- segmentation study -------------------------------------------------------------


@dataclass(frozen=True)
class SegmentationResult:
    n_segments: int
    segment_size: int
    pvalues: dict
    rates: dict
    warnings: tuple = ()


def run_airline_style_segmentation(data, n_sub: int, methods, seed=None, model=None,
                                   alpha: float = 0.05, two_sided: bool = True,
                                   min_segments: int = 10) -> SegmentationResult:
    """Permute ``data``, cut it into ``floor(N / n_sub)`` segments and check each.

    Parameters
    ----------
    methods : mapping of label to ``CheckConfig`` (a sequence gets labels
        from the method names)
    model : defaults to ``GeometricBeta()``

    Streams: permutation ``seed.child(0)``, segment ``i`` under method ``m``
    ``seed.child(1, i, m)``.
    """
    seed = as_seed(seed)
    model = M.GeometricBeta() if model is None else parse_model(model)
    n = len(data)
    n_sub = int(n_sub)
    if n_sub < 1 or n_sub > n / 2:
        raise InvalidParameter("segment size must lie in [1, N / 2]")
    if not isinstance(methods, dict):
        methods = {f"{c.method}#{i}" if [x.method for x in methods].count(c.method) > 1
                   else c.method: c for i, c in enumerate(methods)}
    n_seg = n // n_sub
    notes = ()
    if n_seg < min_segments:
        notes = (f"only {n_seg} segments; rates are very noisy",)
        warnings.warn(notes[0], RuntimeWarning, stacklevel=2)
    perm = seed.child(0).generator().permutation(n)
    pvalues, rates = {}, {}
    for m, (label, cfg) in enumerate(methods.items()):
        ps = np.empty(n_seg)
        for i in range(n_seg):
            segment = data.subset(perm[i * n_sub:(i + 1) * n_sub])
            res = run_check(model, segment, cfg, seed.child(1, i, m))[0]
            ps[i] = res.p_two_sided.value if two_sided else res.p.value
        pvalues[label] = ps
        rates[label] = estimate_rate(ps, alpha)
    return SegmentationResult(n_seg, n_sub, pvalues, rates, notes)


# -- CSV ingestion ----------------------------------------------------------------


def read_csv(path, schema: dict = None):
    """Read a ``value`` column with optional ``group`` or ``time`` columns.

    ``schema`` renames columns, e.g. ``{"value": "delay"}``. Groups keep
    the order of first appearance.
    """
    names = {"value": "value", "group": "group", "time": "time"}
    names.update(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(1, "empty file; a header row is required") from None
        if names["value"] not in header:
            raise SchemaMismatch(f"missing required column {names['value']!r}")
        col = {key: header.index(name) for key, name in names.items() if name in header}
        values, groups, times, lines = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                values.append(float(row[col["value"]]))
                if "time" in col:
                    times.append(float(row[col["time"]]))
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            if "group" in col:
                groups.append(row[col["group"]].strip())
            lines.append(lineno)
    if not values:
        raise ParseError(2, "no data rows")
    bad = [i for i, v in enumerate(values + times) if not math.isfinite(v)]
    if bad:
        raise ParseError(lines[bad[0] % len(values)], "non-finite value")
    if "group" in col and "time" in col:
        raise SchemaMismatch("use either a group column or a time column, not both")
    if "group" in col:
        order = list(dict.fromkeys(groups))
        arr = np.asarray(values)
        labels = np.asarray(groups)
        try:
            return GroupedDataset(tuple(arr[labels == g] for g in order))
        except ValidationError as exc:
            raise SchemaMismatch(str(exc)) from None
    if "time" in col:
        try:
            return TimeSeriesDataset(values, times)
        except NonMonotoneIndex as exc:
            raise ParseError(lines[exc.position], "time column is not strictly increasing") from None
    return IidDataset(values)


def check_csv(path, model, cfg: CheckConfig, seed=None, schema: dict = None):
    """Run one check on data read from a CSV file."""
    model = parse_model(model)
    data = read_csv(path, schema)
    hierarchical = isinstance(model, M.GaussianHierarchical)
    if isinstance(data, GroupedDataset) and not hierarchical:
        raise SchemaMismatch(f"{type(model).__name__} cannot use a group column")
    if hierarchical and not isinstance(data, GroupedDataset):
        raise SchemaMismatch("the hierarchical model needs a group column")
    return run_check(model, data, cfg, seed)[0]


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)
