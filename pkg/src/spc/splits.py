"""Observed/held-out splits and fold partitions.

All index sets refer to flat positions in the source dataset (group-major
order for grouped data), so every split can be audited against the original
data and applied with ``data.subset``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DegenerateSplit,
    GroupedDataset,
    InvalidParameter,
    ShapeMismatch,
    TooManyFolds,
    as_seed,
    ceil_fraction,
)

__all__ = [
    "IidRandom",
    "IidPrefix",
    "HierCross",
    "HierWithin",
    "TsExtrapolated",
    "TsInterpolated",
    "SplitResult",
    "FoldPlan",
    "FOLD_STRATEGIES",
    "parse_strategy",
    "split",
    "make_folds",
    "k_from_rule",
]


def _check_q(q: float) -> float:
    q = float(q)
    if not 0.0 < q < 1.0:
        raise InvalidParameter(f"q must lie in (0, 1), got {q}")
    return q


@dataclass(frozen=True)
class IidRandom:
    """Uniformly random ``ceil(qN)``-subset observed."""

    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    name = "iid_random"


@dataclass(frozen=True)
class IidPrefix:
    """First ``ceil(qN)`` positions observed."""

    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    name = "iid_prefix"


@dataclass(frozen=True)
class HierCross:
    """``ceil(qI)`` whole groups observed, chosen at random."""

    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    name = "hier_cross"


@dataclass(frozen=True)
class HierWithin:
    """``ceil(q J_i)`` random observations of every group observed."""

    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    name = "hier_within"


@dataclass(frozen=True)
class TsExtrapolated:
    """First ``ceil(qN)`` time points observed."""

    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    name = "ts_extrapolated"


@dataclass(frozen=True)
class TsInterpolated:
    """Within each consecutive block of ``m`` points the first ``ceil(qm)`` are observed.

    ``m=None`` picks ``max(floor(N / 20), 2)`` for the data at hand.
    """

    q: float = 0.5
    m: int = None

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))
        if self.m is not None:
            if int(self.m) != self.m or self.m < 2:
                raise InvalidParameter("block size m must be an integer >= 2")
            object.__setattr__(self, "m", int(self.m))

    name = "ts_interpolated"

    def block(self, n: int) -> int:
        return self.m if self.m is not None else max(n // 20, 2)


_STRATEGIES = {
    cls.name: cls
    for cls in (IidRandom, IidPrefix, HierCross, HierWithin, TsExtrapolated, TsInterpolated)
}


def parse_strategy(text: str, q: float = 0.5):
    """Build a strategy from its config name, e.g. ``ts_interpolated:12``."""
    head, _, arg = text.strip().partition(":")
    if head not in _STRATEGIES:
        raise InvalidParameter(f"unknown split strategy {text!r}")
    if head == "ts_interpolated":
        return TsInterpolated(q, int(arg) if arg else None)
    if arg:
        raise InvalidParameter(f"{head} takes no argument")
    return _STRATEGIES[head](q)


@dataclass(frozen=True)
class SplitResult:
    observed_indices: np.ndarray
    heldout_indices: np.ndarray
    strategy: object = None

    def apply(self, data):
        """Return the ``(observed, heldout)`` datasets."""
        return data.subset(self.observed_indices), data.subset(self.heldout_indices)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else as_seed(seed).generator()


def _need_groups(data, strategy):
    if not isinstance(data, GroupedDataset):
        raise ShapeMismatch(f"{strategy.name} needs grouped data")


def split(data, strategy=None, seed=None) -> SplitResult:
    """Split ``data`` into disjoint observed and held-out index sets.

    Raises
    ------
    DegenerateSplit
        If either side would be empty.
    """
    strategy = IidRandom() if strategy is None else strategy
    n = len(data)
    if isinstance(strategy, (HierCross, HierWithin)):
        _need_groups(data, strategy)

    if isinstance(strategy, IidRandom):
        perm = _rng(seed).permutation(n)
        obs = perm[: ceil_fraction(strategy.q, n)]
    elif isinstance(strategy, (IidPrefix, TsExtrapolated)):
        obs = np.arange(ceil_fraction(strategy.q, n))
    elif isinstance(strategy, HierCross):
        n_groups = data.n_groups
        chosen = _rng(seed).permutation(n_groups)[: ceil_fraction(strategy.q, n_groups)]
        obs = np.flatnonzero(np.isin(data.group_of, chosen))
    elif isinstance(strategy, HierWithin):
        rng = _rng(seed)
        parts = [
            start + rng.permutation(size)[: ceil_fraction(strategy.q, size)]
            for start, size in zip(data.offsets, data.sizes)
        ]
        obs = np.concatenate(parts)
    elif isinstance(strategy, TsInterpolated):
        m = strategy.block(n)
        pos = np.arange(n)
        block_start = pos - pos % m
        block_len = np.minimum(m, n - block_start)
        first = np.array([ceil_fraction(strategy.q, int(b)) for b in range(m + 1)])
        obs = pos[(pos - block_start) < first[block_len]]
    else:
        raise InvalidParameter(f"unknown split strategy {strategy!r}")

    obs = np.sort(np.asarray(obs, dtype=int))
    mask = np.zeros(n, dtype=bool)
    mask[obs] = True
    heldout = np.flatnonzero(~mask)
    if obs.size == 0 or heldout.size == 0:
        raise DegenerateSplit(
            f"{strategy.name} with q={strategy.q} on {n} observations leaves a side empty"
        )
    return SplitResult(obs, heldout, strategy)


# -- folds --------------------------------------------------------------------

FOLD_STRATEGIES = ("random", "cross", "within", "contiguous", "strided")


@dataclass(frozen=True)
class FoldPlan:
    """``k`` disjoint folds of equal size; ``dropped`` lists unused positions.

    Fold size counts observations, except for ``cross`` formation where whole
    groups are dealt out and ``unit_size`` counts groups.
    """

    k: int
    folds: tuple
    strategy: str
    unit_size: int
    dropped: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    warnings: tuple = ()


def _fold_warning(msg: str, notes: list) -> None:
    notes.append(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)


def make_folds(data, k: int, fold_strategy: str = "random", seed=None) -> FoldPlan:
    """Partition ``data`` into ``k`` equal folds, dropping the remainder.

    ``random`` deals shuffled positions; ``cross`` deals shuffled whole groups;
    ``within`` splits every group into ``k`` equal random parts; ``contiguous``
    uses consecutive blocks and ``strided`` takes every ``k``-th position.

    Raises
    ------
    TooManyFolds
        If a fold would have fewer than 2 units and so could not be split.
    """
    k = int(k)
    if k < 2:
        raise InvalidParameter("k must be at least 2")
    if fold_strategy not in FOLD_STRATEGIES:
        raise InvalidParameter(f"unknown fold strategy {fold_strategy!r}")
    n = len(data)
    notes: list = []

    if fold_strategy == "cross":
        _need_groups(data, HierCross())
        units = data.n_groups
        size = units // k
        if size < 2:
            raise TooManyFolds(f"{k} folds of {units} groups leave fewer than 2 groups per fold")
        order = _rng(seed).permutation(units)
        folds = tuple(
            np.flatnonzero(np.isin(data.group_of, order[j * size:(j + 1) * size]))
            for j in range(k)
        )
    elif fold_strategy == "within":
        _need_groups(data, HierWithin())
        per_group = data.sizes // k
        if per_group.min() < 1 or per_group.sum() < 2:
            raise TooManyFolds(f"{k} folds leave some group without observations in a fold")
        rng = _rng(seed)
        pieces = [[] for _ in range(k)]
        for start, size, take in zip(data.offsets, data.sizes, per_group):
            perm = start + rng.permutation(size)
            for j in range(k):
                pieces[j].append(perm[j * take:(j + 1) * take])
        folds = tuple(np.concatenate(p) for p in pieces)
        size = int(per_group.sum())
        if np.any(data.sizes // k != data.sizes / k):
            notes.append("within-group remainders dropped")
    else:
        size = n // k
        if size < 2:
            raise TooManyFolds(f"{k} folds of {n} observations leave fewer than 2 per fold")
        if fold_strategy == "random":
            perm = _rng(seed).permutation(n)
            folds = tuple(perm[j * size:(j + 1) * size] for j in range(k))
        elif fold_strategy == "contiguous":
            folds = tuple(np.arange(j * size, (j + 1) * size) for j in range(k))
        else:
            folds = tuple(np.arange(j, k * size, k) for j in range(k))

    folds = tuple(np.sort(f) for f in folds)
    used = np.zeros(n, dtype=bool)
    for f in folds:
        used[f] = True
    dropped = np.flatnonzero(~used)
    if size < 4:
        _fold_warning(f"folds hold only {size} units each", notes)
    if dropped.size > 0.1 * n:
        _fold_warning(f"{dropped.size} of {n} observations dropped by the fold rule", notes)
    return FoldPlan(k, folds, fold_strategy, size, dropped, tuple(notes))


def k_from_rule(n: int, b: float = 1.0, beta: float = 0.49) -> int:
    """Fold count ``floor(b * n**beta)``, never below 2."""
    if n < 2:
        raise InvalidParameter("n must be at least 2")
    if not b > 0:
        raise InvalidParameter("b must be positive")
    if not 0.0 < beta < 1.0:
        raise InvalidParameter("beta must lie in (0, 1)")
    return max(2, math.floor(b * float(n) ** beta))
