from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from isacsim import distributions as dist
from isacsim.metrics import ks_distance
from isacsim.params import CountPmf, DualSlope, GevParams, builtin_params


def test_lognormal_moment_conversion():
    # oracle: sigma solved numerically from the coefficient of variation
    mu, sigma = dist.lognormal_from_moments(2.751, 0.632)
    assert mu == pytest.approx(0.9862483, abs=1e-6)
    assert sigma == pytest.approx(0.2267871, abs=1e-6)
    x = dist.sample_lognormal(dist.make_rng(11), mu, sigma, 10**7)
    assert x.mean() == pytest.approx(2.751, rel=0.005)
    assert x.std() == pytest.approx(0.632, rel=0.005)


def test_lognormal_degenerate_limit():
    mu, sigma = dist.lognormal_from_moments(3.0, 1e-9)
    assert sigma < 1e-9
    assert mu == pytest.approx(math.log(3.0), abs=1e-12)


def test_left_lifetime_90th_percentile():
    mu, sigma = dist.lognormal_from_moments(2.925, 0.708)
    q90 = dist.lognormal_quantile(mu, sigma, 0.9)
    assert q90 == pytest.approx(math.exp(mu + 1.28155 * sigma), rel=1e-5)
    # oracle: scipy lognorm ppf with the numerically solved sigma
    assert q90 == pytest.approx(3.859827, abs=1e-5)
    assert q90 < 5.0


def test_lognormal_rejects_nonpositive():
    with pytest.raises(ValueError):
        dist.lognormal_from_moments(0.0, 1.0)
    with pytest.raises(ValueError):
        dist.lognormal_from_moments(1.0, -1.0)


def test_normal_zero_sigma_is_exact():
    rng = dist.make_rng(0)
    assert dist.sample_normal(rng, -3.25, 0.0) == -3.25
    assert np.all(dist.sample_normal(rng, 1.5, 0.0, 100) == 1.5)


def test_gamma_moments():
    x = dist.sample_gamma(dist.make_rng(5), 1.311, 81.621, 10**6)
    assert 1.311 * 81.621 == pytest.approx(107.01, abs=0.01)
    assert 1.311 * 81.621**2 == pytest.approx(8733.6, rel=1e-4)
    assert x.mean() == pytest.approx(107.01, rel=0.01)
    assert x.var() == pytest.approx(8733.6, rel=0.02)


def test_phase_range_and_mean():
    x = dist.sample_phase(dist.make_rng(2), 10**6)
    assert x.min() >= 0.0 and x.max() < 2 * math.pi
    assert abs(x.mean() - math.pi) < 0.01


def test_gumbel_median_of_exponent():
    g = GevParams(1e-12, 3.0, -2.5)
    assert dist.gev_quantile(g, math.exp(-1.0)) == pytest.approx(-2.5, abs=1e-12)


def test_gev_pdf_at_location():
    g = builtin_params("front").residual_low
    assert g == GevParams(-0.112, 4.089, -2.908)
    assert dist.gev_pdf(g.location, g) == pytest.approx(math.exp(-1) / 4.089, rel=1e-12)
    assert dist.gev_pdf(g.location, g) == pytest.approx(0.08996, abs=1e-5)


@pytest.mark.parametrize("shape", [-0.112, 0.0, 0.135, 0.3])
def test_gev_matches_scipy(shape):
    g = GevParams(shape, 3.3, -3.0)
    ref = stats.genextreme(c=-shape, loc=g.location, scale=g.scale)
    x = np.linspace(-20, 40, 301)
    np.testing.assert_allclose(dist.gev_pdf(x, g), ref.pdf(x), rtol=1e-9, atol=1e-300)
    np.testing.assert_allclose(dist.gev_cdf(x, g), ref.cdf(x), rtol=1e-9, atol=1e-300)
    u = np.linspace(0.001, 0.999, 50)
    np.testing.assert_allclose(dist.gev_quantile(g, u), ref.ppf(u), rtol=1e-9, atol=1e-9)
    if shape < 0.5:
        assert dist.gev_mean(g) == pytest.approx(ref.mean(), rel=1e-9)
        assert dist.gev_var(g) == pytest.approx(ref.var(), rel=1e-9)


def test_gev_support_edges():
    lo, hi = dist.gev_support(GevParams(-0.2, 2.0, 1.0))
    assert lo == -math.inf and hi == pytest.approx(11.0)
    assert dist.gev_cdf(12.0, GevParams(-0.2, 2.0, 1.0)) == 1.0
    assert dist.gev_pdf(12.0, GevParams(-0.2, 2.0, 1.0)) == 0.0
    assert dist.gev_cdf(-20.0, GevParams(0.2, 2.0, 1.0)) == 0.0


def test_gev_draws_fit_analytic_cdf():
    g = builtin_params("front").residual_low
    x = dist.sample_gev(dist.make_rng(8), g, size=10**6)
    assert ks_distance(x, lambda v: dist.gev_cdf(v, g)) < 0.002


def test_gev_rejects_bad_scale():
    with pytest.raises(ValueError):
        dist.sample_gev(dist.make_rng(0), GevParams(0.1, 0.0, 0.0))


def test_birth_pmf_zero_frequency(front):
    x = dist.sample_pmf(dist.make_rng(4), front.birth_pmf, size=10**6)
    assert abs(np.mean(x == 0) - 0.9603) <= 0.003


def test_cluster_pmf_two_frequency(front):
    x = dist.sample_pmf(dist.make_rng(4), front.cluster_pmf, size=10**6)
    assert x.min() >= 1
    assert abs(np.mean(x == 2) - 0.3575 / 0.9795) <= 0.003


def test_point_mass_pmf():
    x = dist.sample_pmf(dist.make_rng(1), CountPmf((1.0,), 0), size=1000)
    assert np.all(x == 0)
    assert dist.sample_pmf(dist.make_rng(1), CountPmf((1.0,), 0)) == 0


def test_dual_slope_values(front):
    law = front.initial_power
    assert dist.dual_slope_eval(0.0, law) == pytest.approx(-61.191, abs=1e-12)
    assert dist.dual_slope_eval(50.0, law) == pytest.approx(-51.991, abs=1e-12)
    assert dist.dual_slope_eval(100.0, law) == pytest.approx(-56.571, abs=1e-12)
    with pytest.raises(ValueError):
        dist.dual_slope_eval(-1.0, law)


def test_seeded_streams_reproduce():
    a = dist.make_rng(99).random(10)
    b = dist.make_rng(99).random(10)
    assert np.array_equal(a, b)
    s1, s2 = dist.spawn_rngs(99, 2)
    assert not np.array_equal(s1.random(10), s2.random(10))
    with pytest.raises(ValueError):
        dist.make_rng(-1)


@settings(max_examples=60, deadline=None)
@given(
    shape=st.floats(-0.4, 0.4),
    scale=st.floats(0.5, 10.0),
    loc=st.floats(-20.0, 20.0),
    u=st.floats(1e-6, 1 - 1e-6),
)
def test_gev_quantile_inverts_cdf(shape, scale, loc, u):
    g = GevParams(shape, scale, loc)
    assert dist.gev_cdf(dist.gev_quantile(g, u), g) == pytest.approx(u, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(mean=st.floats(0.1, 50.0), cv=st.floats(0.01, 2.0))
def test_lognormal_conversion_inverts(mean, cv):
    mu, sigma = dist.lognormal_from_moments(mean, mean * cv)
    m = math.exp(mu + sigma**2 / 2)
    s = m * math.sqrt(math.expm1(sigma**2))
    assert m == pytest.approx(mean, rel=1e-10)
    assert s == pytest.approx(mean * cv, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(0.0, 1000.0), a=st.floats(-1, 1), b=st.floats(-100, 0))
def test_dual_slope_segments(tau, a, b):
    law = DualSlope(a, b, -a, b + 1.0)
    expected = a * tau + b if tau <= 50.0 else -a * tau + b + 1.0
    assert dist.dual_slope_eval(tau, law) == pytest.approx(expected)
