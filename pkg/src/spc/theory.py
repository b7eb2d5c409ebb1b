"""Closed-form large-sample behaviour of the single split predictive check.

Throughout, ``z_alpha`` denotes the lower ``alpha`` quantile ``Phi^{-1}(alpha)``,
so a correctly specified model (``rho = 1``) rejects with probability
``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import InvalidParameter, SpcError

__all__ = [
    "SingularMatrix",
    "EssUndefined",
    "RhoInputs",
    "rho_squared",
    "asym_rejection_prob",
    "asym_power_two_sided",
    "rho_scenarios",
    "SCENARIOS",
    "prior_ess",
    "relative_ess",
    "beta_for_target_r",
]


class SingularMatrix(SpcError, np.linalg.LinAlgError):
    pass


class EssUndefined(SpcError, TypeError):
    pass


@dataclass(frozen=True)
class RhoInputs:
    """Ingredients of the miscalibration ratio.

    Attributes
    ----------
    q : split proportion
    sigma_true_sq : asymptotic variance of the statistic under the truth
    sigma_model_sq : the same variance under the pseudo-true model
    grad : gradient of the statistic's mean map at the pseudo-true parameter
    j_star : expected negative Hessian of the log-likelihood
    sigma_star_mat : covariance of the score under the truth
    """

    q: float
    sigma_true_sq: float
    sigma_model_sq: float
    grad: np.ndarray
    j_star: np.ndarray
    sigma_star_mat: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise InvalidParameter("q must lie in (0, 1]")
        if not (self.sigma_true_sq > 0 and self.sigma_model_sq > 0):
            raise InvalidParameter("variances must be positive")
        grad = np.atleast_1d(np.asarray(self.grad, dtype=float))
        d = grad.size
        j = np.asarray(self.j_star, dtype=float).reshape(d, d)
        s = np.asarray(self.sigma_star_mat, dtype=float).reshape(d, d)
        for name, m in (("j_star", j), ("sigma_star_mat", s)):
            if not np.allclose(m, m.T):
                raise InvalidParameter(f"{name} must be symmetric")
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "j_star", j)
        object.__setattr__(self, "sigma_star_mat", s)


def rho_squared(inputs: RhoInputs) -> float:
    """``(q s*^2 + (1-q) g'J^-1 S J^-1 g) / (q s^2 + (1-q) g'J^-1 g)``."""
    try:
        np.linalg.cholesky(inputs.j_star)
        w = np.linalg.solve(inputs.j_star, inputs.grad)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("j_star must be positive definite") from exc
    q = inputs.q
    num = q * inputs.sigma_true_sq + (1 - q) * float(w @ inputs.sigma_star_mat @ w)
    den = q * inputs.sigma_model_sq + (1 - q) * float(inputs.grad @ w)
    return num / den


def _check(alpha, rho):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter("alpha must lie in (0, 1)")
    if not rho > 0:
        raise InvalidParameter("rho must be positive")


def asym_rejection_prob(alpha: float, rho: float) -> float:
    """Limiting ``Pr[p < alpha]`` for the one-sided check: ``Phi(Phi^{-1}(alpha) / rho)``."""
    _check(alpha, rho)
    if rho == 1.0:
        return float(alpha)
    return float(special.ndtr(special.ndtri(alpha) / rho))


def asym_power_two_sided(alpha: float, rho: float) -> float:
    """Limiting rejection rate of the two-sided check: ``2 Phi(Phi^{-1}(alpha/2) / rho)``."""
    _check(alpha, rho)
    if rho == 1.0:
        return float(alpha)
    return float(2.0 * special.ndtr(special.ndtri(alpha / 2.0) / rho))


def _negbin(tau: float, mu: float = 2.0) -> float:
    # variance ratio (mu + mu^2 / tau) / mu of the mean statistic
    if not (tau > 0 and mu > 0):
        raise InvalidParameter("negbin needs tau > 0 and mu > 0")
    return math.sqrt(1.0 + mu / tau)


def _binomial(p: float, trials: int = 30) -> float:
    if not 0.0 < p < 1.0:
        raise InvalidParameter("binomial needs p in (0, 1)")
    return math.sqrt(1.0 - p)


def _gaussian_mean(sigma_star: float, sigma: float = 1.0) -> float:
    if not (sigma_star > 0 and sigma > 0):
        raise InvalidParameter("standard deviations must be positive")
    return sigma_star / sigma


def _gaussian_mse(sigma_star: float, sigma: float = 1.0) -> float:
    if not (sigma_star > 0 and sigma > 0):
        raise InvalidParameter("standard deviations must be positive")
    return sigma_star**2 / sigma**2


SCENARIOS = {
    "negbin": _negbin,
    "binomial": _binomial,
    "gaussian_mean": _gaussian_mean,
    "gaussian_mse": _gaussian_mse,
}


def rho_scenarios(scenario: str, **params) -> float:
    """Closed-form ``rho`` for the built-in misspecification scenarios.

    ========================  ==============================  ==================
    scenario                  parameters                      rho
    ========================  ==============================  ==================
    ``negbin``                ``tau``, ``mu`` (default 2)     sqrt(1 + mu/tau)
    ``binomial``              ``p``, ``trials`` (default 30)  sqrt(1 - p)
    ``gaussian_mean``         ``sigma_star``, ``sigma``       sigma_star / sigma
    ``gaussian_mse``          ``sigma_star``, ``sigma``       (sigma_star/sigma)^2
    ========================  ==============================  ==================

    All four use the mean (or MSE) statistic, for which ``rho`` does not
    depend on the split proportion.
    """
    try:
        fn = SCENARIOS[scenario]
    except KeyError:
        raise InvalidParameter(f"unknown scenario {scenario!r}") from None
    try:
        return fn(**params)
    except TypeError as exc:
        raise InvalidParameter(f"bad parameters for {scenario}: {exc}") from None


def prior_ess(model) -> float:
    """Prior effective sample size; for a Gamma prior on a Poisson rate, its rate."""
    from .models import PoissonGamma

    if not isinstance(model, PoissonGamma):
        raise EssUndefined(f"prior ESS is only defined for PoissonGamma, not {type(model).__name__}")
    return float(model.rate)


def relative_ess(n0: float, n_star: float) -> float:
    """``r = N0 / (N0 + N*)``."""
    if n0 < 0 or n_star < 1:
        raise InvalidParameter("need N0 >= 0 and N* >= 1")
    return n0 / (n0 + n_star)


def beta_for_target_r(r: float, n_star: float) -> float:
    """Prior rate giving relative ESS ``r`` at sample size ``N*``."""
    if not 0.0 < r < 1.0:
        raise InvalidParameter("r must lie in (0, 1)")
    if n_star < 1:
        raise InvalidParameter("N* must be at least 1")
    return r / (1.0 - r) * n_star
