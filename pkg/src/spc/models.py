"""Posterior and predictive machinery, plus data-generating truths.

Posterior draws are dicts of arrays whose leading axis indexes the draw:

==========================  ==========================================
model                       draw keys
==========================  ==========================================
``PoissonGamma``            ``rate``
``NormalKnownVar``          ``mu``
``NormalImproper``          ``mu``, ``sigma2``
``GeometricBeta``           ``p``
``GaussianHierarchical``    ``mu0``, ``sigma0_sq``, ``eta`` (S, I)
==========================  ==========================================

Replicated data come back as ``(S, n)`` arrays laid out like a template
dataset so statistics can be evaluated in batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np
from scipy import special, stats

from .core import (
    GroupedDataset,
    IidDataset,
    InsufficientData,
    InvalidParameter,
    ShapeMismatch,
    SpcError,
    as_seed,
)
from .statistics import Statistic, evaluate_batch, order_statistic

__all__ = [
    "GammaDist",
    "NormalDist",
    "BetaDist",
    "NormalInvGammaDist",
    "PoissonGamma",
    "NormalKnownVar",
    "NormalImproper",
    "GeometricBeta",
    "GaussianHierarchical",
    "Poisson",
    "NegBinMeanDispersion",
    "BinomialScaled",
    "Normal",
    "GeometricTruth",
    "HierScenario",
    "posterior_params",
    "sample_posterior",
    "gibbs_hierarchical",
    "gibbs_sweep",
    "sample_predictive",
    "sample_truth",
    "prior_shape_for_quantile",
]


# -- closed-form posterior families -------------------------------------------------


@dataclass(frozen=True)
class GammaDist:
    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2

    def pdf(self, x):
        return stats.gamma.pdf(x, self.shape, scale=1.0 / self.rate)


@dataclass(frozen=True)
class NormalDist:
    mean: float
    var: float

    def pdf(self, x):
        return stats.norm.pdf(x, self.mean, math.sqrt(self.var))


@dataclass(frozen=True)
class BetaDist:
    a: float
    b: float

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def pdf(self, x):
        return stats.beta.pdf(x, self.a, self.b)


@dataclass(frozen=True)
class NormalInvGammaDist:
    """``sigma2 ~ InvGamma(shape, scale)``, ``mu | sigma2 ~ N(loc, sigma2 / n)``."""

    loc: float
    n: int
    shape: float
    scale: float

    def pdf(self, mu, sigma2):
        dens_s2 = stats.invgamma.pdf(sigma2, self.shape, scale=self.scale)
        return dens_s2 * stats.norm.pdf(mu, self.loc, np.sqrt(sigma2 / self.n))


def _require_counts(data) -> np.ndarray:
    x = np.asarray(data.values)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise InvalidParameter("count models need nonnegative integer data")
    return x


def _positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if not (value > 0 and math.isfinite(value)):
            raise InvalidParameter(f"{name} must be positive, got {value}")


def _flat_only(like) -> None:
    if isinstance(like, GroupedDataset):
        raise ShapeMismatch("this model handles ungrouped data only")


class _ConjugateIid:
    """Shared plumbing for the one-level conjugate models."""

    def sample_posterior(self, data, n_draws: int, rng: np.random.Generator) -> dict:
        _flat_only(data)
        return self._draw(self.posterior_params(data), n_draws, rng)

    def sample_posterior_many(self, datasets, n_draws: int, seeds) -> list:
        return [self.sample_posterior(d, n_draws, s.generator()) for d, s in zip(datasets, seeds)]

    def replicate(self, draws: dict, like, rng, mode: str = "within", group_ids=None) -> np.ndarray:
        _flat_only(like)
        return self._replicate(draws, len(like), rng)

    def replicate_statistics(self, stat, draws, like, rng, mode="within", group_ids=None):
        """``T(Y_s)`` (or ``T(Y_s, theta_s)``) for one replicate per draw."""
        _flat_only(like)
        if isinstance(stat, Statistic):
            fast = self._fast_statistic(stat, draws, len(like), rng)
            if fast is not None:
                return fast
        values = self._replicate(draws, len(like), rng)
        cond = self.conditional_mean(draws, like) if stat.parameter_dependent else None
        return evaluate_batch(stat, values, like, cond_mean=cond)

    def _fast_statistic(self, stat, draws, n, rng):
        return None


@dataclass(frozen=True)
class PoissonGamma(_ConjugateIid):
    """Poisson likelihood with a ``Gamma(shape, rate)`` prior on the rate."""

    shape: float = 0.1
    rate: float = 0.2

    def __post_init__(self):
        _positive(shape=self.shape, rate=self.rate)

    def posterior_params(self, data) -> GammaDist:
        _flat_only(data)
        x = _require_counts(data)
        return GammaDist(self.shape + x.sum(), self.rate + x.size)

    def prior_ess(self) -> float:
        return self.rate

    def _draw(self, post: GammaDist, n, rng):
        return {"rate": rng.gamma(post.shape, 1.0 / post.rate, size=n)}

    def _replicate(self, draws, n, rng):
        lam = draws["rate"]
        return rng.poisson(lam[:, None], size=(lam.size, n)).astype(float)

    def conditional_mean(self, draws, like, group_ids=None):
        return draws["rate"][:, None]

    def _fast_statistic(self, stat, draws, n, rng):
        # sum of n Poisson(lam) draws is Poisson(n * lam)
        if stat.kind == "mean":
            return rng.poisson(n * draws["rate"]) / n
        return None


@dataclass(frozen=True)
class NormalKnownVar(_ConjugateIid):
    """``X ~ N(theta, sigma^2)`` with ``theta ~ N(mu, tau^2)``."""

    sigma: float = 1.0
    mu: float = 0.0
    tau: float = 100.0

    def __post_init__(self):
        _positive(sigma=self.sigma, tau=self.tau)

    def posterior_params(self, data) -> NormalDist:
        _flat_only(data)
        x = np.asarray(data.values)
        prec = 1.0 / self.tau**2 + x.size / self.sigma**2
        loc = (self.mu / self.tau**2 + x.sum() / self.sigma**2) / prec
        return NormalDist(loc, 1.0 / prec)

    def _draw(self, post: NormalDist, n, rng):
        return {"mu": post.mean + math.sqrt(post.var) * rng.standard_normal(n)}

    def _replicate(self, draws, n, rng):
        mu = draws["mu"]
        return mu[:, None] + self.sigma * rng.standard_normal((mu.size, n))

    def conditional_mean(self, draws, like, group_ids=None):
        return draws["mu"][:, None]

    def _fast_statistic(self, stat, draws, n, rng):
        mu = draws["mu"]
        if stat.kind == "mean":
            return mu + self.sigma / math.sqrt(n) * rng.standard_normal(mu.size)
        if stat.kind == "mse":
            return self.sigma**2 * rng.chisquare(n, size=mu.size) / n
        return None


@dataclass(frozen=True)
class NormalImproper(_ConjugateIid):
    """``X ~ N(mu, sigma^2)`` with prior density proportional to ``1 / sigma^2``."""

    def posterior_params(self, data) -> NormalInvGammaDist:
        _flat_only(data)
        x = np.asarray(data.values)
        n = x.size
        if n < 2:
            raise InsufficientData("the 1/sigma^2 prior needs at least 2 observations")
        ss = float(np.sum((x - x.mean()) ** 2))
        if ss == 0:
            raise InsufficientData("constant data give an improper posterior")
        return NormalInvGammaDist(float(x.mean()), n, (n - 1) / 2.0, ss / 2.0)

    def _draw(self, post: NormalInvGammaDist, n, rng):
        sigma2 = post.scale / rng.standard_gamma(post.shape, size=n)
        mu = post.loc + np.sqrt(sigma2 / post.n) * rng.standard_normal(n)
        return {"mu": mu, "sigma2": sigma2}

    def _replicate(self, draws, n, rng):
        mu, sd = draws["mu"], np.sqrt(draws["sigma2"])
        return mu[:, None] + sd[:, None] * rng.standard_normal((mu.size, n))

    def conditional_mean(self, draws, like, group_ids=None):
        return draws["mu"][:, None]

    def _fast_statistic(self, stat, draws, n, rng):
        mu, s2 = draws["mu"], draws["sigma2"]
        if stat.kind == "mean":
            return mu + np.sqrt(s2 / n) * rng.standard_normal(mu.size)
        if stat.kind == "mse":
            return s2 * rng.chisquare(n, size=mu.size) / n
        return None


@dataclass(frozen=True)
class GeometricBeta(_ConjugateIid):
    """Geometric counts on ``{0, 1, ...}`` (pmf ``p (1-p)^x``) with a Beta prior."""

    a: float = 0.1
    b: float = 0.2

    def __post_init__(self):
        _positive(a=self.a, b=self.b)

    def posterior_params(self, data) -> BetaDist:
        _flat_only(data)
        x = _require_counts(data)
        return BetaDist(self.a + x.size, self.b + x.sum())

    def _draw(self, post: BetaDist, n, rng):
        return {"p": rng.beta(post.a, post.b, size=n)}

    def _replicate(self, draws, n, rng):
        p = draws["p"]
        return (rng.geometric(p[:, None], size=(p.size, n)) - 1).astype(float)

    def conditional_mean(self, draws, like, group_ids=None):
        p = draws["p"]
        return ((1.0 - p) / p)[:, None]

    def _fast_statistic(self, stat, draws, n, rng):
        # failures before the n-th success: the sum of n geometric counts
        if stat.kind in ("mean", "success_rate"):
            total = rng.negative_binomial(n, draws["p"]).astype(float)
            if stat.kind == "mean":
                return total / n
            with np.errstate(divide="ignore"):
                return np.where(total > 0, n / np.where(total > 0, total, 1.0), np.inf)
        return None


# -- Gaussian hierarchical model ----------------------------------------------------


@dataclass(frozen=True)
class GaussianHierarchical:
    """Two-level model ``X_ij ~ N(eta_i, v_obs)``, ``eta_i ~ N(mu0, sigma0^2)``.

    The default prior on ``(mu0, sigma0^2)`` is the improper density
    ``1 / sigma0^2``. Setting ``prior_mean_var``, ``prior_shape`` and
    ``prior_scale`` gives the proper prior ``mu0 ~ N(prior_mean, prior_mean_var)``
    and ``sigma0^2 ~ InvGamma(prior_shape, prior_scale)``, which forward
    simulation (e.g. Geweke testing) needs.
    """

    v_obs: float = 4.0
    burn_in: int = 1000
    thinning: int = 1
    prior_mean: float = 0.0
    prior_mean_var: float = math.inf
    prior_shape: float = 0.0
    prior_scale: float = 0.0

    def __post_init__(self):
        _positive(v_obs=self.v_obs)
        if not self.prior_mean_var > 0:
            raise InvalidParameter("prior_mean_var must be positive (inf for a flat prior)")
        if self.burn_in < 0 or self.thinning < 1:
            raise InvalidParameter("burn_in must be >= 0 and thinning >= 1")
        if self.prior_shape < 0 or self.prior_scale < 0:
            raise InvalidParameter("inverse-gamma prior parameters must be nonnegative")

    @property
    def proper(self) -> bool:
        return math.isfinite(self.prior_mean_var) and self.prior_shape > 0 and self.prior_scale > 0

    def posterior_params(self, data):
        raise InvalidParameter("the hierarchical model has no closed-form posterior; use Gibbs")

    def sample_posterior(self, data, n_draws, rng):
        return gibbs_hierarchical(self, data, n_draws, rng)

    def sample_posterior_many(self, datasets, n_draws, seeds) -> list:
        """Posterior draws for several datasets, batching equal group counts.

        Each dataset uses only its own stream, so the draws match
        ``sample_posterior(d, n, seed.generator())`` exactly.
        """
        out = [None] * len(datasets)
        by_groups: dict = {}
        for pos, d in enumerate(datasets):
            by_groups.setdefault(_hier_input(d).n_groups, []).append(pos)
        for positions in by_groups.values():
            batch = _run_gibbs(
                self,
                [datasets[p] for p in positions],
                n_draws,
                [seeds[p].generator() for p in positions],
            )
            for p, draws in zip(positions, batch):
                out[p] = draws
        return out

    def _etas(self, draws, like, rng, mode, group_ids):
        n_draws = draws["mu0"].size
        if mode == "new":
            sd = np.sqrt(draws["sigma0_sq"])[:, None]
            return draws["mu0"][:, None] + sd * rng.standard_normal((n_draws, like.n_groups))
        if mode != "within":
            raise InvalidParameter(f"unknown replication mode {mode!r}")
        ids = np.arange(like.n_groups) if group_ids is None else np.asarray(group_ids)
        if ids.size != like.n_groups:
            raise ShapeMismatch("group_ids must name one posterior group per template group")
        return draws["eta"][:, ids]

    def replicate(self, draws, like, rng, mode="within", group_ids=None) -> np.ndarray:
        """Replicated grouped data.

        ``mode="within"`` reuses the sampled ``eta`` of the posterior groups
        named by ``group_ids``; ``mode="new"`` draws fresh groups from
        ``N(mu0, sigma0^2)``. Group sizes follow the template ``like``.
        """
        if not isinstance(like, GroupedDataset):
            raise ShapeMismatch("the hierarchical model replicates grouped data")
        eta = self._etas(draws, like, rng, mode, group_ids)
        means = np.repeat(eta, like.sizes, axis=1)
        return means + math.sqrt(self.v_obs) * rng.standard_normal(means.shape)

    def conditional_mean(self, draws, like, group_ids=None):
        ids = np.arange(like.n_groups) if group_ids is None else np.asarray(group_ids)
        return np.repeat(draws["eta"][:, ids], like.sizes, axis=1)

    def replicate_statistics(self, stat, draws, like, rng, mode="within", group_ids=None):
        if not isinstance(like, GroupedDataset):
            raise ShapeMismatch("the hierarchical model replicates grouped data")
        if isinstance(stat, Statistic) and stat.kind in ("grand_mean", "mean", "quantile_group_means"):
            # group means of replicated data are exactly N(eta_i, v_obs / J_i)
            eta = self._etas(draws, like, rng, mode, group_ids)
            sizes = like.sizes
            gmeans = eta + np.sqrt(self.v_obs / sizes) * rng.standard_normal(eta.shape)
            if stat.kind == "quantile_group_means":
                return order_statistic(gmeans, stat.param, axis=1)
            return gmeans @ sizes / sizes.sum()
        values = self.replicate(draws, like, rng, mode, group_ids)
        cond = None
        if stat.parameter_dependent:
            if mode == "new":
                raise InvalidParameter("realized discrepancies need within-group replication")
            cond = self.conditional_mean(draws, like, group_ids)
        return evaluate_batch(stat, values, like, cond_mean=cond)


_COLLAPSE = 1e-10


def _hier_input(data) -> GroupedDataset:
    if not isinstance(data, GroupedDataset):
        raise ShapeMismatch("the hierarchical model needs grouped data")
    if data.n_groups < 3:
        raise InsufficientData("the hierarchical posterior needs at least 3 groups")
    return data


def _sweep(model, sums, counts, mu0, s2, z_eta, z_mu, g):
    """One Gibbs scan over eta, mu0, sigma0^2 using pre-drawn noise.

    ``g`` is a standard gamma draw with the (state-independent) posterior
    shape of ``sigma0^2``; all arrays carry a leading batch axis.
    """
    n_groups = sums.shape[1]
    prec = counts / model.v_obs + 1.0 / s2[:, None]
    loc = (sums / model.v_obs + (mu0 / s2)[:, None]) / prec
    eta = loc + z_eta / np.sqrt(prec)
    if math.isfinite(model.prior_mean_var):
        prec0 = n_groups / s2 + 1.0 / model.prior_mean_var
        loc0 = (eta.sum(axis=1) / s2 + model.prior_mean / model.prior_mean_var) / prec0
        mu0 = loc0 + z_mu / np.sqrt(prec0)
    else:
        mu0 = eta.mean(axis=1) + np.sqrt(s2 / n_groups) * z_mu
    ss = np.sum((eta - mu0[:, None]) ** 2, axis=1)
    s2 = (model.prior_scale + ss / 2.0) / g
    return eta, mu0, s2


def _run_gibbs(model, datasets, n_draws, rngs) -> list:
    data = [_hier_input(d) for d in datasets]
    sums = np.array([[grp.sum() for grp in d.groups] for d in data])
    counts = np.array([d.sizes for d in data], dtype=float)
    n_batch, n_groups = sums.shape
    iters = model.burn_in + n_draws * model.thinning
    post_shape = model.prior_shape + n_groups / 2.0
    # every dataset draws its noise from its own stream, in a fixed order
    z_eta = np.empty((iters, n_batch, n_groups))
    z_mu = np.empty((iters, n_batch))
    g = np.empty((iters, n_batch))
    for b, rng in enumerate(rngs):
        z_eta[:, b, :] = rng.standard_normal((iters, n_groups))
        z_mu[:, b] = rng.standard_normal(iters)
        g[:, b] = rng.standard_gamma(post_shape, size=iters)

    ybar = sums / counts
    mu0 = sums.sum(axis=1) / counts.sum(axis=1)
    s2 = ybar.var(axis=1, ddof=1)
    s2 = np.where(s2 > 0, s2, model.v_obs / counts.mean(axis=1))
    keep_eta = np.empty((n_batch, n_draws, n_groups))
    keep_mu = np.empty((n_batch, n_draws))
    keep_s2 = np.empty((n_batch, n_draws))
    kept = 0
    for t in range(iters):
        eta, mu0, s2 = _sweep(model, sums, counts, mu0, s2, z_eta[t], z_mu[t], g[t])
        if t >= model.burn_in and (t - model.burn_in) % model.thinning == 0:
            keep_eta[:, kept] = eta
            keep_mu[:, kept] = mu0
            keep_s2[:, kept] = s2
            kept += 1
    if not (np.all(np.isfinite(keep_eta)) and np.all(np.isfinite(keep_s2))):
        raise SpcError("Gibbs sampler produced non-finite draws")
    # the 1/sigma0^2 prior lets the chain fall into sigma0^2 = 0 and stay there
    if np.any(keep_s2 < _COLLAPSE * model.v_obs):
        raise SpcError("Gibbs chain collapsed to sigma0^2 = 0")
    return [
        {"mu0": keep_mu[b], "sigma0_sq": keep_s2[b], "eta": keep_eta[b]} for b in range(n_batch)
    ]


def gibbs_hierarchical(model: GaussianHierarchical, data, n_draws: int, seed) -> dict:
    """Gibbs draws of ``(mu0, sigma0^2, eta_1..eta_I)`` after burn-in and thinning.

    Full conditionals under the default improper prior::

        eta_i   | rest ~ N((J_i ybar_i / v + mu0 / s0^2) / (J_i / v + 1 / s0^2),
                           1 / (J_i / v + 1 / s0^2))
        mu0     | eta, s0^2 ~ N(mean(eta), s0^2 / I)
        s0^2    | eta, mu0  ~ InvGamma(I / 2, sum((eta - mu0)^2) / 2)

    The chain starts at ``mu0`` = grand mean, ``s0^2`` = variance of the group
    means and ``eta_i`` = group mean.
    """
    rng = seed if isinstance(seed, np.random.Generator) else as_seed(seed).generator()
    return _run_gibbs(model, [data], int(n_draws), [rng])[0]


def gibbs_sweep(model: GaussianHierarchical, state: dict, data: GroupedDataset, rng) -> dict:
    """Advance a single-chain state ``{mu0, sigma0_sq}`` by one Gibbs scan."""
    data = _hier_input(data)
    sums = np.array([[grp.sum() for grp in data.groups]])
    counts = np.array([data.sizes], dtype=float)
    z_eta = rng.standard_normal((1, data.n_groups))
    z_mu = rng.standard_normal(1)
    g = rng.standard_gamma(model.prior_shape + data.n_groups / 2.0, size=1)
    eta, mu0, s2 = _sweep(
        model, sums, counts, np.atleast_1d(state["mu0"]), np.atleast_1d(state["sigma0_sq"]),
        z_eta, z_mu, g,
    )
    return {"eta": eta[0], "mu0": float(mu0[0]), "sigma0_sq": float(s2[0])}


# -- data-generating distributions -----------------------------------------------


def _iid_size(shape) -> int:
    if hasattr(shape, "n_obs"):
        return len(shape)
    n = int(shape)
    if n < 1:
        raise InvalidParameter("dataset size must be positive")
    return n


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        _positive(rate=self.rate)

    def sample(self, shape, rng) -> IidDataset:
        return IidDataset(rng.poisson(self.rate, _iid_size(shape)).astype(float))


@dataclass(frozen=True)
class NegBinMeanDispersion:
    """Negative binomial with mean ``mean`` and variance ``mean + mean^2 / dispersion``."""

    mean: float
    dispersion: float

    def __post_init__(self):
        _positive(mean=self.mean, dispersion=self.dispersion)

    def sample(self, shape, rng) -> IidDataset:
        p = self.dispersion / (self.dispersion + self.mean)
        return IidDataset(rng.negative_binomial(self.dispersion, p, _iid_size(shape)).astype(float))


@dataclass(frozen=True)
class BinomialScaled:
    trials: int
    prob: float

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidParameter("trials must be a positive integer")
        if not 0.0 < self.prob < 1.0:
            raise InvalidParameter("prob must lie in (0, 1)")

    def sample(self, shape, rng) -> IidDataset:
        return IidDataset(rng.binomial(int(self.trials), self.prob, _iid_size(shape)).astype(float))


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        _positive(sd=self.sd)

    def sample(self, shape, rng) -> IidDataset:
        return IidDataset(self.mean + self.sd * rng.standard_normal(_iid_size(shape)))


@dataclass(frozen=True)
class GeometricTruth:
    """Geometric counts on ``{0, 1, ...}`` with success probability ``theta``."""

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise InvalidParameter("theta must lie in (0, 1]")

    def sample(self, shape, rng) -> IidDataset:
        return IidDataset((rng.geometric(self.theta, _iid_size(shape)) - 1).astype(float))


_SCENARIOS = ("S1", "S2", "S3", "S4")


@dataclass(frozen=True)
class HierScenario:
    """Grouped truths for the hierarchical study.

    S1 well specified (``eta ~ N(0, 1)``, ``X ~ N(eta, 4)``); S2 gamma group
    means ``eta ~ Gam(0.6, rate 0.2)``; S3 observation variance 8; S4
    log-normal observations ``ln X ~ N(eta, 4)``.
    """

    scenario: str = "S1"
    n_groups: int = 200
    group_size: int = 8

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise InvalidParameter(f"scenario must be one of {_SCENARIOS}")
        if self.n_groups < 2 or self.group_size < 1:
            raise InvalidParameter("need at least 2 groups of at least 1 observation")

    def sample(self, shape=None, rng=None) -> GroupedDataset:
        n_groups, sizes = self.n_groups, None
        if isinstance(shape, GroupedDataset):
            sizes = shape.sizes
        elif shape is not None:
            n_groups = int(shape)
        if sizes is None:
            sizes = np.full(n_groups, self.group_size)
        n_groups = sizes.size
        if self.scenario == "S2":
            eta = rng.gamma(0.6, 1.0 / 0.2, size=n_groups)
        else:
            eta = rng.standard_normal(n_groups)
        sd = math.sqrt(8.0) if self.scenario == "S3" else 2.0
        x = np.repeat(eta, sizes) + sd * rng.standard_normal(int(sizes.sum()))
        if self.scenario == "S4":
            x = np.exp(x)
        return GroupedDataset(tuple(np.split(x, np.cumsum(sizes)[:-1])))


# -- module-level operations --------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else as_seed(seed).generator()


def posterior_params(model, data):
    """Closed-form posterior of a conjugate model."""
    return model.posterior_params(data)


def sample_posterior(model, data, n_draws: int, seed) -> dict:
    """``n_draws`` posterior draws; deterministic given ``seed``."""
    if n_draws < 1:
        raise InvalidParameter("n_draws must be positive")
    return model.sample_posterior(data, int(n_draws), _rng(seed))


def sample_predictive(model, theta_draw: dict, shape, seed, mode="within", group_ids=None):
    """One replicated dataset of the requested shape given one parameter draw.

    ``shape`` is a template dataset or, for ungrouped models, a size.
    """
    like = shape if hasattr(shape, "n_obs") else IidDataset(np.zeros(int(shape)))
    draws = {k: np.asarray(v, dtype=float)[None, ...] for k, v in theta_draw.items()}
    values = model.replicate(draws, like, _rng(seed), mode=mode, group_ids=group_ids)[0]
    return like.with_values(values)


def sample_truth(truth, shape, seed):
    """Draw a dataset of the given shape from a data-generating distribution."""
    return truth.sample(shape, _rng(seed))


def prior_shape_for_quantile(theta_star: float, rate: float, level: float = 0.95,
                             tol: float = 1e-8) -> float:
    """Gamma prior shape placing ``theta_star`` at the ``level`` prior quantile.

    The quantile is increasing in the shape, so a bracketing bisection is
    run until the quantile is within ``tol`` of ``theta_star``.
    """
    _positive(theta_star=theta_star, rate=rate)
    if not 0.0 < level < 1.0:
        raise InvalidParameter("level must lie in (0, 1)")

    def q(shape):
        return special.gammaincinv(shape, level) / rate

    lo, hi = 1e-12, 1.0
    while q(hi) < theta_star:
        hi *= 2.0
        if hi > 1e12:
            raise InvalidParameter("no prior shape reaches the requested quantile")
    if q(lo) > theta_star:
        raise InvalidParameter("theta_star below every attainable quantile")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        qm = q(mid)
        if abs(qm - theta_star) <= tol:
            return mid
        if qm < theta_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
