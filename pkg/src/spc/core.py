"""Shared domain types: datasets, seeds, p-values and the error hierarchy."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "SpcError",
    "ValidationError",
    "EmptyData",
    "NonFiniteValue",
    "NonMonotoneIndex",
    "OutOfRange",
    "ShapeMismatch",
    "InvalidParameter",
    "InsufficientData",
    "DegenerateSplit",
    "TooManyFolds",
    "TruthUnavailable",
    "IidDataset",
    "GroupedDataset",
    "TimeSeriesDataset",
    "Dataset",
    "SeedSpec",
    "PValue",
    "as_seed",
    "ceil_fraction",
    "two_sided",
    "validate",
]


class SpcError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SpcError, ValueError):
    pass


class EmptyData(ValidationError):
    def __init__(self, what: str = "dataset"):
        super().__init__(f"{what} is empty")


class NonFiniteValue(ValidationError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"non-finite value at position {position}")


class NonMonotoneIndex(ValidationError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"time index not strictly increasing at position {position}")


class OutOfRange(ValidationError):
    pass


class ShapeMismatch(SpcError, ValueError):
    pass


class InvalidParameter(SpcError, ValueError):
    pass


class InsufficientData(SpcError, ValueError):
    pass


class DegenerateSplit(SpcError, ValueError):
    pass


class TooManyFolds(SpcError, ValueError):
    pass


class TruthUnavailable(SpcError, RuntimeError):
    pass


def ceil_fraction(q: float, n: int) -> int:
    """``ceil(q * n)`` computed on the decimal value of ``q``.

    Plain float arithmetic gets this wrong for e.g. ``q = 0.7, n = 10``.
    """
    return math.ceil(Fraction(repr(float(q))) * int(n))


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_finite(arr: np.ndarray, offset: int = 0) -> None:
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise NonFiniteValue(int(bad[0]) + offset)


@dataclass(frozen=True, eq=False)
class IidDataset:
    """Exchangeable observations ``x_1, ..., x_N``."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1:
            raise ShapeMismatch("IidDataset values must be one-dimensional")
        if arr.size == 0:
            raise EmptyData()
        _check_finite(arr)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n_obs(self) -> int:
        return self.values.size

    def subset(self, idx) -> IidDataset:
        return IidDataset(self.values[np.asarray(idx, dtype=int)])

    def with_values(self, values) -> IidDataset:
        return IidDataset(values)


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Ragged collection of groups; observation ``(i, j)`` is ``groups[i][j]``.

    Flat indices address observations in group-major order, which is how
    splits and folds refer to individual observations.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(_frozen(g) for g in self.groups)
        if len(groups) < 2:
            if not groups:
                raise EmptyData("grouped dataset")
            raise ShapeMismatch("a grouped dataset needs at least 2 groups")
        offset = 0
        for g in groups:
            if g.ndim != 1:
                raise ShapeMismatch("each group must be one-dimensional")
            if g.size == 0:
                raise EmptyData("group")
            _check_finite(g, offset)
            offset += g.size
        object.__setattr__(self, "groups", groups)
        sizes = _frozen([g.size for g in groups], dtype=int)
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(self, "_flat", _frozen(np.concatenate(groups)))
        object.__setattr__(
            self, "_group_of", _frozen(np.repeat(np.arange(len(groups)), sizes), dtype=int)
        )

    def __len__(self) -> int:
        return int(self._sizes.sum())

    @property
    def n_obs(self) -> int:
        return len(self)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def offsets(self) -> np.ndarray:
        """Start position of every group in the flat ordering."""
        return np.concatenate([[0], np.cumsum(self._sizes)[:-1]])

    @property
    def values(self) -> np.ndarray:
        return self._flat

    @property
    def group_of(self) -> np.ndarray:
        """Group id of each flat position."""
        return self._group_of

    def group_means(self) -> np.ndarray:
        return np.array([g.mean() for g in self.groups])

    def kept_groups(self, idx) -> np.ndarray:
        """Sorted ids of the groups touched by flat indices ``idx``."""
        return np.unique(self.group_of[np.asarray(idx, dtype=int)])

    def subset(self, idx) -> GroupedDataset:
        """Keep the flat positions ``idx``; groups left empty are dropped."""
        idx = np.sort(np.asarray(idx, dtype=int))
        flat = self.values
        owner = self.group_of[idx]
        return GroupedDataset(
            tuple(flat[idx[owner == g]] for g in np.unique(owner))
        )

    def with_values(self, values) -> GroupedDataset:
        values = np.asarray(values, dtype=float)
        if values.size != len(self):
            raise ShapeMismatch("replacement values do not match the group sizes")
        return GroupedDataset(tuple(np.split(values, np.cumsum(self._sizes)[:-1])))


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Ordered observations with strictly increasing time stamps."""

    values: np.ndarray
    index: np.ndarray = None

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1:
            raise ShapeMismatch("time-series values must be one-dimensional")
        if arr.size == 0:
            raise EmptyData()
        _check_finite(arr)
        index = np.arange(arr.size, dtype=float) if self.index is None else _frozen(self.index)
        if index.shape != arr.shape:
            raise ShapeMismatch("values and index lengths differ")
        _check_finite(index)
        steps = np.flatnonzero(np.diff(index) <= 0)
        if steps.size:
            raise NonMonotoneIndex(int(steps[0]) + 1)
        index.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n_obs(self) -> int:
        return self.values.size

    def subset(self, idx) -> TimeSeriesDataset:
        idx = np.sort(np.asarray(idx, dtype=int))
        return TimeSeriesDataset(self.values[idx], self.index[idx])

    def with_values(self, values) -> TimeSeriesDataset:
        return TimeSeriesDataset(values, self.index)


Dataset = Union[IidDataset, GroupedDataset, TimeSeriesDataset]


def validate(dataset) -> None:
    """Check the dataset invariants, raising a ``ValidationError`` on failure.

    Accepts dataset objects or raw data: a flat sequence is treated as i.i.d.
    data, a sequence of sequences as grouped data.
    """
    if isinstance(dataset, (IidDataset, GroupedDataset, TimeSeriesDataset)):
        # constructed objects were validated on creation
        return
    seq = list(dataset)
    if not seq:
        raise EmptyData()
    if all(isinstance(v, (Sequence, np.ndarray)) and not isinstance(v, str) for v in seq):
        GroupedDataset(tuple(seq))
    else:
        IidDataset(seq)


@dataclass(frozen=True)
class SeedSpec:
    """Address of an independent random stream.

    The stream for ``(master_seed, stream_path)`` is obtained by hashing both
    through numpy's ``SeedSequence``, so two specs with different paths give
    independent generators and the same spec always gives the same draws.
    """

    master_seed: int
    stream_path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidParameter("master_seed must be an unsigned 64-bit integer")
        path = tuple(int(p) for p in self.stream_path)
        if any(p < 0 for p in path):
            raise InvalidParameter("stream_path entries must be nonnegative")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_path", path)

    def child(self, *path: int) -> SeedSpec:
        return SeedSpec(self.master_seed, self.stream_path + tuple(path))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(ss))


def as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    if seed is None:
        return SeedSpec(0)
    return SeedSpec(int(seed))


@dataclass(frozen=True)
class PValue:
    value: float
    mc_samples: int = 1

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise InvalidParameter(f"p-value {v} outside [0, 1]")
        if int(self.mc_samples) < 1:
            raise InvalidParameter("mc_samples must be positive")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "mc_samples", int(self.mc_samples))

    def __float__(self) -> float:
        return self.value


def two_sided(p):
    """Return ``2 * min(p, 1 - p)``; accepts a float or a ``PValue``."""
    if isinstance(p, PValue):
        return PValue(two_sided(p.value), p.mc_samples)
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"p-value {p} outside [0, 1]")
    return min(1.0, 2.0 * min(p, 1.0 - p))
