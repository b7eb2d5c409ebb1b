"""Test statistics ``T_N`` for predictive checks.

Every statistic is evaluated in batch form: ``evaluate_batch`` takes an
``(S, n)`` array of datasets that all share the layout of a template dataset
and returns ``S`` values. Single-dataset evaluation is the ``S = 1`` case, so
observed and replicated data always go through the same code.

Quantiles use the empirical order statistic at 1-based position
``ceil(c * n)``, without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import GroupedDataset, InvalidParameter, ShapeMismatch, ceil_fraction

__all__ = [
    "Statistic",
    "CustomStatistic",
    "mean",
    "moment",
    "quantile",
    "std_dev",
    "success_rate",
    "autocorr",
    "grand_mean",
    "mean_group_quantiles",
    "quantile_group_means",
    "mse",
    "parse_statistic",
    "evaluate",
    "evaluate_batch",
    "evaluate_discrepancy",
    "order_statistic",
]

_GROUPED = {"grand_mean", "mean_group_quantiles", "quantile_group_means"}
_KINDS = {
    "mean", "moment", "quantile", "std_dev", "success_rate", "autocorr", "mse", *_GROUPED,
}


@dataclass(frozen=True)
class Statistic:
    """A named statistic kind with its optional parameter.

    ``param`` is the moment order, quantile level or autocorrelation lag,
    depending on ``kind``.
    """

    kind: str
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameter(f"unknown statistic kind {self.kind!r}")
        if self.kind == "moment" and self.param not in (2, 3):
            raise InvalidParameter("moment order must be 2 or 3")
        if self.kind in ("quantile", "mean_group_quantiles", "quantile_group_means"):
            if self.param is None or not 0.0 < float(self.param) < 1.0:
                raise InvalidParameter("quantile level must lie in (0, 1)")
        if self.kind == "autocorr":
            if self.param is None or int(self.param) != self.param or self.param < 0:
                raise InvalidParameter("autocorrelation lag must be a nonnegative integer")
            object.__setattr__(self, "param", int(self.param))

    @property
    def parameter_dependent(self) -> bool:
        return self.kind == "mse"

    @property
    def grouped(self) -> bool:
        return self.kind in _GROUPED

    @property
    def name(self) -> str:
        if self.kind == "moment":
            return f"moment{int(self.param)}"
        if self.param is None:
            return self.kind
        if self.kind == "autocorr":
            return f"autocorr:{self.param}"
        return f"{self.kind}:{self.param:g}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CustomStatistic:
    """User-supplied statistic.

    ``func(values, like)`` receives an ``(S, n)`` array plus the template
    dataset and must return ``S`` values. Parameter-dependent statistics also
    receive the ``(S, n)`` conditional means as a third argument.
    """

    name: str
    func: Callable
    parameter_dependent: bool = False
    grouped: bool = False

    def __str__(self) -> str:
        return self.name


def mean() -> Statistic:
    return Statistic("mean")


def moment(order: int) -> Statistic:
    return Statistic("moment", order)


def quantile(level: float) -> Statistic:
    return Statistic("quantile", level)


def std_dev() -> Statistic:
    return Statistic("std_dev")


def success_rate() -> Statistic:
    return Statistic("success_rate")


def autocorr(lag: int) -> Statistic:
    return Statistic("autocorr", lag)


def grand_mean() -> Statistic:
    return Statistic("grand_mean")


def mean_group_quantiles(level: float) -> Statistic:
    return Statistic("mean_group_quantiles", level)


def quantile_group_means(level: float) -> Statistic:
    return Statistic("quantile_group_means", level)


def mse() -> Statistic:
    return Statistic("mse")


def parse_statistic(text: str) -> Statistic:
    """Parse a config name such as ``quantile:0.75`` or ``moment2``."""
    text = text.strip()
    if text in ("moment2", "moment3"):
        return moment(int(text[-1]))
    head, _, arg = text.partition(":")
    if head in ("quantile", "mean_group_quantiles", "quantile_group_means"):
        if not arg:
            raise InvalidParameter(f"{head} needs a level, e.g. {head}:0.75")
        return Statistic(head, float(arg))
    if head == "autocorr":
        if not arg:
            raise InvalidParameter("autocorr needs a lag, e.g. autocorr:1")
        return autocorr(int(arg))
    if arg or head not in _KINDS or head == "moment":
        raise InvalidParameter(f"unknown statistic {text!r}")
    return Statistic(head)


def order_statistic(values: np.ndarray, level: float, axis: int = -1) -> np.ndarray:
    """Order statistic at 1-based position ``ceil(level * n)`` along ``axis``."""
    n = values.shape[axis]
    k = min(max(ceil_fraction(level, n), 1), n) - 1
    return np.take(np.partition(values, k, axis=axis), k, axis=axis)


def _group_blocks(like: GroupedDataset):
    """Yield ``(group_ids, flat_index_matrix)`` per distinct group size."""
    sizes = like.sizes
    offsets = like.offsets
    for size in np.unique(sizes):
        ids = np.flatnonzero(sizes == size)
        yield ids, offsets[ids][:, None] + np.arange(size)[None, :]


def _group_means(values: np.ndarray, like: GroupedDataset) -> np.ndarray:
    return np.add.reduceat(values, like.offsets, axis=1) / like.sizes


def _group_quantiles(values: np.ndarray, like: GroupedDataset, level: float) -> np.ndarray:
    out = np.empty((values.shape[0], like.n_groups))
    for ids, cols in _group_blocks(like):
        out[:, ids] = order_statistic(values[:, cols], level, axis=-1)
    return out


def _autocorr(values: np.ndarray, lag: int) -> np.ndarray:
    n = values.shape[1]
    if lag >= n:
        raise ShapeMismatch(f"lag {lag} needs more than {n} observations")
    centered = values - values.mean(axis=1, keepdims=True)
    denom = np.einsum("ij,ij->i", centered, centered)
    if lag == 0:
        num = denom
    else:
        num = np.einsum("ij,ij->i", centered[:, :-lag], centered[:, lag:])
    # constant series have no measurable dependence: r_0 = 1, r_l = 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / denom
    zero = denom == 0
    r[zero] = 1.0 if lag == 0 else 0.0
    return r


def evaluate_batch(stat, values, like, cond_mean=None) -> np.ndarray:
    """Evaluate ``stat`` on every row of ``values``.

    Parameters
    ----------
    stat : Statistic or CustomStatistic
    values : array of shape (S, n)
        Rows are datasets laid out like ``like`` (group-major for grouped data).
    like : Dataset
        Template carrying the shape (group sizes, time index).
    cond_mean : array broadcastable to (S, n), optional
        ``E[X | theta]`` for parameter-dependent statistics.

    Returns
    -------
    numpy.ndarray of shape (S,)
        For ``success_rate`` an all-zero row gives ``inf`` rather than raising;
        use :func:`evaluate` for the checked single-dataset version.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != len(like):
        raise ShapeMismatch(f"rows have {values.shape[1]} values, template has {len(like)}")
    if isinstance(stat, CustomStatistic):
        if stat.parameter_dependent:
            if cond_mean is None:
                raise InvalidParameter(f"{stat.name} needs E[X | theta]")
            out = stat.func(values, like, np.broadcast_to(cond_mean, values.shape))
        else:
            out = stat.func(values, like)
        return np.asarray(out, dtype=float).reshape(values.shape[0])

    kind = stat.kind
    if stat.grouped and not isinstance(like, GroupedDataset):
        raise ShapeMismatch(f"{stat.name} needs grouped data")
    if kind == "autocorr" and isinstance(like, GroupedDataset):
        raise ShapeMismatch("autocorrelation needs a time series or a plain vector")

    if kind in ("mean", "grand_mean"):
        return values.mean(axis=1)
    if kind == "moment":
        return np.mean(values ** int(stat.param), axis=1)
    if kind == "quantile":
        return order_statistic(values, stat.param, axis=1)
    if kind == "std_dev":
        return values.std(axis=1)
    if kind == "success_rate":
        total = values.sum(axis=1)
        with np.errstate(divide="ignore"):
            return np.where(total > 0, values.shape[1] / np.where(total > 0, total, 1), np.inf)
    if kind == "autocorr":
        return _autocorr(values, stat.param)
    if kind == "mean_group_quantiles":
        return _group_quantiles(values, like, stat.param).mean(axis=1)
    if kind == "quantile_group_means":
        return order_statistic(_group_means(values, like), stat.param, axis=1)
    if kind == "mse":
        if cond_mean is None:
            raise InvalidParameter("mse needs E[X | theta]; use evaluate_discrepancy")
        return np.mean((values - cond_mean) ** 2, axis=1)
    raise InvalidParameter(f"unhandled statistic {stat!r}")  # pragma: no cover


def evaluate(stat, data) -> float:
    """Evaluate a parameter-free statistic on one dataset."""
    if stat.parameter_dependent:
        raise InvalidParameter(f"{stat} depends on the parameter; use evaluate_discrepancy")
    if isinstance(stat, Statistic) and stat.kind == "success_rate":
        total = float(np.sum(data.values))
        if total == 0:
            raise ZeroDivisionError("success rate undefined for all-zero data")
    return float(evaluate_batch(stat, data.values[None, :], data)[0])


def evaluate_discrepancy(stat, data, theta, model) -> float:
    """Evaluate a realized discrepancy ``T(x, theta)`` for one parameter value.

    ``theta`` is a single draw in the model's parameter layout (a dict of
    scalars or arrays); the model supplies ``E[X | theta]``.
    """
    if not stat.parameter_dependent:
        raise InvalidParameter(f"{stat} does not depend on the parameter")
    draws = {k: np.asarray(v, dtype=float)[None, ...] for k, v in theta.items()}
    cond = model.conditional_mean(draws, data)
    return float(evaluate_batch(stat, data.values[None, :], data, cond_mean=cond)[0])
