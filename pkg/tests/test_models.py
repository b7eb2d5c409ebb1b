import math

import numpy as np
import pytest
from scipy import stats

import oracles
from spc.core import GroupedDataset, IidDataset, InsufficientData, InvalidParameter, SeedSpec, ShapeMismatch
from spc.models import (
    BinomialScaled,
    GaussianHierarchical,
    GeometricBeta,
    GeometricTruth,
    HierScenario,
    NegBinMeanDispersion,
    NormalImproper,
    NormalKnownVar,
    Poisson,
    PoissonGamma,
    gibbs_hierarchical,
    posterior_params,
    prior_shape_for_quantile,
    sample_posterior,
    sample_predictive,
    sample_truth,
)
from spc.statistics import evaluate_batch, grand_mean, mean, mse, quantile_group_means, success_rate


def iid(*xs):
    return IidDataset(np.array(xs, dtype=float))


# -- closed-form posteriors ---------------------------------------------------------


def test_poisson_gamma_update():
    post = posterior_params(PoissonGamma(0.1, 0.2), iid(2, 3, 1))
    assert (post.shape, post.rate) == pytest.approx((6.1, 3.2))


def test_normal_known_var_update():
    post = posterior_params(NormalKnownVar(sigma=1, mu=0, tau=1), iid(2))
    assert (post.mean, post.var) == pytest.approx((1.0, 0.5))


def test_geometric_beta_update():
    post = posterior_params(GeometricBeta(0.1, 0.2), iid(0, 4))
    assert (post.a, post.b) == pytest.approx((2.1, 4.2))


def test_normal_improper_update():
    post = posterior_params(NormalImproper(), iid(1, 2, 3, 6))
    # xbar 3, (N-1) s^2 = 14
    assert (post.loc, post.n, post.shape, post.scale) == pytest.approx((3.0, 4, 1.5, 7.0))


def test_normal_improper_needs_two_points():
    with pytest.raises(InsufficientData):
        posterior_params(NormalImproper(), iid(1.0))


def test_count_models_reject_non_counts():
    with pytest.raises(InvalidParameter):
        posterior_params(PoissonGamma(), iid(1.5, 2))
    with pytest.raises(InvalidParameter):
        posterior_params(GeometricBeta(), iid(-1, 2))


@pytest.mark.parametrize("kwargs", [dict(shape=0), dict(rate=-1)])
def test_prior_parameters_positive(kwargs):
    with pytest.raises(InvalidParameter):
        PoissonGamma(**kwargs)


def test_hierarchical_has_no_closed_form():
    with pytest.raises(InvalidParameter):
        posterior_params(GaussianHierarchical(), GroupedDataset(([1.0], [2.0], [3.0])))


# A few datasets per model here; the acceptance suite runs 50.
@pytest.mark.parametrize("seed", range(3))
def test_conjugacy_against_quadrature(seed):
    rng = np.random.default_rng(seed)
    x = rng.poisson(2.0, size=rng.integers(1, 8))
    x[0] += 2
    m = PoissonGamma(0.1, 0.2)
    post = posterior_params(m, IidDataset(x))
    grid = np.linspace(post.mean / 20, post.mean * 4, 2000)
    np.testing.assert_allclose(post.pdf(grid), oracles.poisson_gamma_density(x, 0.1, 0.2, grid),
                               atol=1e-6, rtol=0)

    x = rng.normal(1.0, 2.0, size=rng.integers(1, 8))
    m = NormalKnownVar(2.0, 0.5, 3.0)
    post = posterior_params(m, IidDataset(x))
    grid = np.linspace(post.mean - 6 * math.sqrt(post.var), post.mean + 6 * math.sqrt(post.var), 2000)
    np.testing.assert_allclose(post.pdf(grid), oracles.normal_known_var_density(x, 2.0, 0.5, 3.0, grid),
                               atol=1e-6, rtol=0)

    x = rng.geometric(0.4, size=rng.integers(1, 8)) - 1
    post = posterior_params(GeometricBeta(0.1, 0.2), IidDataset(x))
    grid = np.linspace(0.001, 0.999, 2000)
    np.testing.assert_allclose(post.pdf(grid), oracles.geometric_beta_density(x, 0.1, 0.2, grid),
                               atol=1e-6, rtol=0)


def test_normal_improper_against_quadrature():
    x = np.array([0.3, 1.9, -0.4, 1.2, 0.8])
    post = posterior_params(NormalImproper(), IidDataset(x))
    mu_grid = np.linspace(-1.5, 3.0, 50)
    s2_grid = np.linspace(0.05, 5.0, 40)
    expect = oracles.normal_improper_density(x, mu_grid, s2_grid)
    got = post.pdf(mu_grid[:, None], s2_grid[None, :])
    np.testing.assert_allclose(got, expect, atol=1e-6, rtol=0)


# -- sampling ---------------------------------------------------------------------


def test_poisson_posterior_moments():
    draws = sample_posterior(PoissonGamma(0.1, 0.2), iid(2, 3, 1), 100_000, SeedSpec(1))["rate"]
    mean_, var = 6.1 / 3.2, 6.1 / 3.2**2
    assert abs(draws.mean() - mean_) < 3 * math.sqrt(var / draws.size)
    assert draws.var() == pytest.approx(var, rel=0.02)


def test_sampling_is_deterministic():
    a = sample_posterior(NormalImproper(), iid(1, 2, 4), 50, SeedSpec(3, (1,)))
    b = sample_posterior(NormalImproper(), iid(1, 2, 4), 50, SeedSpec(3, (1,)))
    np.testing.assert_array_equal(a["mu"], b["mu"])
    np.testing.assert_array_equal(a["sigma2"], b["sigma2"])


def test_predictive_poisson_mean():
    d = sample_predictive(PoissonGamma(), {"rate": 2.0}, 10**6, SeedSpec(4))
    assert abs(d.values.mean() - 2.0) < 3 * math.sqrt(2.0 / 10**6)


def test_predictive_geometric_support_from_zero():
    d = sample_predictive(GeometricBeta(), {"p": 0.5}, 10**6, SeedSpec(5))
    # mean (1 - p) / p = 1, variance (1 - p) / p^2 = 2
    assert d.values.min() == 0
    assert abs(d.values.mean() - 1.0) < 3 * math.sqrt(2.0 / 10**6)


def test_predictive_new_groups_variance():
    like = GroupedDataset(tuple(np.zeros(4) for _ in range(20_000)))
    draw = {"mu0": 0.0, "sigma0_sq": 1.0, "eta": np.zeros(20_000)}
    d = sample_predictive(GaussianHierarchical(), draw, like, SeedSpec(6), mode="new")
    assert d.group_means().var() == pytest.approx(1 + 4 / 4, rel=0.03)


def test_predictive_within_groups_reuses_eta():
    like = GroupedDataset(tuple(np.zeros(4000) for _ in range(3)))
    draw = {"mu0": 0.0, "sigma0_sq": 1.0, "eta": np.array([-5.0, 0.0, 5.0])}
    d = sample_predictive(GaussianHierarchical(), draw, like, SeedSpec(7), mode="within")
    np.testing.assert_allclose(d.group_means(), [-5, 0, 5], atol=0.15)


def test_predictive_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        sample_predictive(PoissonGamma(), {"rate": 1.0}, GroupedDataset(([1.0], [2.0])), SeedSpec(1))


def test_predictive_composition_matches_posterior_predictive_mean():
    data = iid(2, 3, 1, 0, 4)
    m = PoissonGamma(0.1, 0.2)
    draws = sample_posterior(m, data, 20_000, SeedSpec(8))
    reps = m.replicate(draws, IidDataset(np.zeros(5)), SeedSpec(9).generator())
    post = posterior_params(m, data)
    # predictive mean equals E[rate]; per-draw spread adds var(rate)
    se = math.sqrt((post.mean + 5 * post.var) / 5 / 20_000)
    assert abs(reps.mean() - post.mean) < 4 * se


# -- fast paths agree in distribution with full replication ------------------------


def _generic(model, stat, draws, like, rng):
    values = model.replicate(draws, like, rng)
    cond = model.conditional_mean(draws, like) if stat.parameter_dependent else None
    return evaluate_batch(stat, values, like, cond_mean=cond)


@pytest.mark.parametrize(
    "model, data, stat",
    [
        (PoissonGamma(), iid(2, 3, 1, 4, 0, 2), mean()),
        (NormalKnownVar(1.5, 0, 10), iid(0.2, -1.0, 0.7), mean()),
        (NormalKnownVar(1.5, 0, 10), iid(0.2, -1.0, 0.7), mse()),
        (NormalImproper(), iid(0.2, -1.0, 0.7, 2.0), mean()),
        (NormalImproper(), iid(0.2, -1.0, 0.7, 2.0), mse()),
        (GeometricBeta(), iid(0, 3, 1, 5), mean()),
        (GeometricBeta(), iid(0, 3, 1, 5), success_rate()),
    ],
)
def test_fast_statistic_matches_generic(model, data, stat):
    like = IidDataset(np.zeros(25))
    draws = model.sample_posterior(data, 20_000, np.random.default_rng(0))
    fast = model.replicate_statistics(stat, draws, like, np.random.default_rng(1))
    slow = _generic(model, stat, draws, like, np.random.default_rng(2))
    fin = np.isfinite(fast) & np.isfinite(slow)
    assert stats.ks_2samp(fast[fin], slow[fin]).pvalue > 1e-3
    assert np.isinf(fast).mean() == pytest.approx(np.isinf(slow).mean(), abs=0.01)


@pytest.mark.parametrize("stat, mode", [(grand_mean(), "within"), (quantile_group_means(0.75), "new")])
def test_hierarchical_fast_statistic_matches_generic(stat, mode):
    like = GroupedDataset(tuple(np.zeros(j) for j in (3, 5, 4, 6, 2)))
    rng = np.random.default_rng(3)
    n = 20_000
    draws = {"mu0": rng.normal(size=n), "sigma0_sq": rng.gamma(3, 0.5, n), "eta": rng.normal(size=(n, 5))}
    m = GaussianHierarchical()
    fast = m.replicate_statistics(stat, draws, like, np.random.default_rng(4), mode=mode)
    slow = evaluate_batch(stat, m.replicate(draws, like, np.random.default_rng(5), mode=mode), like)
    assert stats.ks_2samp(fast, slow).pvalue > 1e-3


# -- Gibbs ----------------------------------------------------------------------


def test_gibbs_limit_small_observation_variance():
    rng = np.random.default_rng(10)
    groups = tuple(rng.normal(mu, 1.0, 6) for mu in (-3.0, 0.0, 2.0, 7.0))
    data = GroupedDataset(groups)
    m = GaussianHierarchical(v_obs=1e-6, burn_in=200)
    draws = gibbs_hierarchical(m, data, 500, SeedSpec(1))
    np.testing.assert_allclose(draws["eta"].mean(axis=0), data.group_means(), atol=1e-3)


def test_gibbs_recovers_s1_hyperparameters():
    data = sample_truth(HierScenario("S1", 200, 8), None, SeedSpec(11))
    draws = gibbs_hierarchical(GaussianHierarchical(), data, 4000, SeedSpec(12))
    # sampling error of the truth itself dominates: sd(mu0) ~ sqrt((1 + 4/8) / 200)
    assert abs(draws["mu0"].mean()) < 3 * math.sqrt(1.5 / 200)
    assert abs(draws["sigma0_sq"].mean() - 1.0) < 0.35


def test_gibbs_deterministic_and_batched_identically():
    m = GaussianHierarchical(burn_in=50)
    d1 = sample_truth(HierScenario("S1", 10, 4), None, SeedSpec(1))
    d2 = sample_truth(HierScenario("S2", 10, 4), None, SeedSpec(2))
    seeds = [SeedSpec(5, (1,)), SeedSpec(5, (2,))]
    batch = m.sample_posterior_many([d1, d2], 100, seeds)
    alone = m.sample_posterior(d2, 100, seeds[1].generator())
    again = m.sample_posterior(d2, 100, seeds[1].generator())
    np.testing.assert_array_equal(batch[1]["eta"], alone["eta"])
    np.testing.assert_array_equal(alone["sigma0_sq"], again["sigma0_sq"])


def test_gibbs_needs_three_groups():
    with pytest.raises(InsufficientData):
        gibbs_hierarchical(GaussianHierarchical(), GroupedDataset(([1.0], [2.0])), 10, SeedSpec(1))


def test_gibbs_thinning_and_length():
    m = GaussianHierarchical(burn_in=10, thinning=3)
    d = sample_truth(HierScenario("S1", 5, 3), None, SeedSpec(1))
    draws = gibbs_hierarchical(m, d, 40, SeedSpec(2))
    assert draws["eta"].shape == (40, 5) and draws["mu0"].shape == (40,)


# -- truths ------------------------------------------------------------------------


def test_negbin_dispersion():
    x = sample_truth(NegBinMeanDispersion(2, 0.01), 10**6, SeedSpec(20)).values
    assert x.mean() == pytest.approx(2.0, rel=0.1)
    assert x.var() / x.mean() == pytest.approx(201, rel=0.05)


def test_binomial_variance_ratio():
    x = sample_truth(BinomialScaled(30, 0.8), 10**6, SeedSpec(21)).values
    assert x.mean() == pytest.approx(24, rel=0.01)
    assert x.var() / x.mean() == pytest.approx(0.2, rel=0.05)


def test_s1_flattened_variance():
    d = sample_truth(HierScenario("S1", 20_000, 8), None, SeedSpec(22))
    assert d.values.var() == pytest.approx(5.0, rel=0.03)


def test_scenarios():
    rng = SeedSpec(23)
    s2 = sample_truth(HierScenario("S2", 20_000, 1), None, rng).values
    # eta ~ Gam(0.6, rate 0.2): mean 3, var 15; plus N(0, 4)
    assert s2.mean() == pytest.approx(3.0, rel=0.05)
    assert s2.var() == pytest.approx(19.0, rel=0.05)
    s3 = sample_truth(HierScenario("S3", 20_000, 4), None, rng).values
    assert s3.var() == pytest.approx(9.0, rel=0.05)
    s4 = sample_truth(HierScenario("S4", 200, 8), None, rng).values
    assert s4.min() > 0


def test_geometric_truth_and_poisson():
    g = sample_truth(GeometricTruth(0.25), 10**5, SeedSpec(24)).values
    assert g.mean() == pytest.approx(3.0, rel=0.03)
    p = sample_truth(Poisson(2), 10**5, SeedSpec(25)).values
    assert p.mean() == pytest.approx(2.0, rel=0.02)


@pytest.mark.parametrize("bad", [lambda: NegBinMeanDispersion(2, 0), lambda: BinomialScaled(30, 1.2),
                                 lambda: HierScenario("S9"), lambda: GeometricTruth(0)])
def test_truth_parameter_checks(bad):
    with pytest.raises(InvalidParameter):
        bad()


def test_prior_shape_for_quantile():
    shape = prior_shape_for_quantile(2.0, 5.0)
    assert oracles.gammainc_quantile(shape, 5.0, 0.95) == pytest.approx(2.0, abs=1e-7)
    assert stats.gamma.ppf(0.95, shape, scale=1 / 5.0) == pytest.approx(2.0, abs=1e-7)
