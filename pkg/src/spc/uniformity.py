"""One-sample Kolmogorov-Smirnov test against Uniform(0, 1)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import OutOfRange, PValue

__all__ = [
    "KsReport",
    "ks_statistic",
    "kolmogorov_cdf",
    "kolmogorov_sf",
    "ks_test",
    "ks_uniform_pvalue",
]

_TERM_TOL = 1e-14
# below this the alternating series converges slowly; use the theta-dual form
_DUAL_BELOW = 1.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class KsReport:
    D: float
    scaled: float
    p: PValue
    k: int
    method: str
    warnings: tuple = ()


def _as_sample(sample) -> np.ndarray:
    u = np.asarray(sample, dtype=float).ravel()
    if u.size == 0:
        raise OutOfRange("KS test needs a nonempty sample")
    if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise OutOfRange("KS uniformity test needs values in [0, 1]")
    return u


def ks_statistic(sample) -> float:
    """Sup-distance between the empirical CDF of ``sample`` and the uniform CDF."""
    u = np.sort(_as_sample(sample))
    k = u.size
    i = np.arange(1, k + 1)
    return float(max(np.max(i / k - u), np.max(u - (i - 1) / k)))


def _dual_sum(t: float) -> float:
    # K(t) = sqrt(2 pi) / t * sum_i exp(-(2i - 1)^2 pi^2 / (8 t^2))
    total, i = 0.0, 1
    c = math.pi**2 / (8.0 * t * t)
    while True:
        term = math.exp(-((2 * i - 1) ** 2) * c)
        total += term
        if term < _TERM_TOL * max(total, 1e-300) or term == 0.0:
            return _SQRT_2PI / t * total
        i += 1


def _alt_sum(t: float) -> float:
    # 2 * sum_i (-1)^(i-1) exp(-2 i^2 t^2), the upper tail 1 - K(t)
    total, i = 0.0, 1
    while True:
        term = math.exp(-2.0 * i * i * t * t)
        total += term if i % 2 else -term
        if math.exp(-2.0 * (i + 1) ** 2 * t * t) < _TERM_TOL:
            return 2.0 * total
        i += 1


def kolmogorov_cdf(t: float) -> float:
    """CDF of the Kolmogorov distribution, ``K(t) = 1 - 2 sum (-1)^(i-1) exp(-2 i^2 t^2)``.

    For ``t < 1`` the equivalent Jacobi theta form is summed instead, since
    it converges in a handful of terms where the alternating series does not.
    """
    t = float(t)
    if t <= 0.0:
        return 0.0
    if t < _DUAL_BELOW:
        return min(1.0, _dual_sum(t))
    return max(0.0, 1.0 - _alt_sum(t))


def kolmogorov_sf(t: float) -> float:
    """``1 - K(t)``, summed directly so deep tails keep relative precision."""
    t = float(t)
    if t <= 0.0:
        return 1.0
    if t < _DUAL_BELOW:
        return max(0.0, 1.0 - _dual_sum(t))
    return min(1.0, max(0.0, _alt_sum(t)))


def ks_test(sample, method: str = "exact") -> KsReport:
    """KS uniformity test of ``sample``.

    Parameters
    ----------
    method : {"exact", "asymptotic"}
        ``exact`` uses the finite-``k`` null distribution of ``D``;
        ``asymptotic`` uses ``1 - K(sqrt(k) D)``, which is conservative for
        moderate ``k`` (a warning is attached when ``k < 20``).
    """
    u = _as_sample(sample)
    k = u.size
    d = ks_statistic(u)
    scaled = math.sqrt(k) * d
    notes = ()
    if method == "exact":
        p = float(stats.kstwo.sf(d, k))
    elif method == "asymptotic":
        p = kolmogorov_sf(scaled)
        if k < 20:
            notes = (f"asymptotic KS p-value with only k={k} values",)
            warnings.warn(notes[0], RuntimeWarning, stacklevel=2)
    else:
        raise ValueError(f"unknown KS method {method!r}")
    return KsReport(d, scaled, PValue(min(max(p, 0.0), 1.0)), k, method, notes)


def ks_uniform_pvalue(sample, method: str = "exact") -> PValue:
    """p-value of the KS test of ``sample`` against Uniform(0, 1)."""
    return ks_test(sample, method).p
