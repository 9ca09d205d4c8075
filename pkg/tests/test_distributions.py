import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from metaflex.distributions import (
    SN_SKEW_MAX,
    DistSpec,
    SkewNormalMoments,
    SkewNormalParams,
    dp_truncation,
    log_density,
    sample,
    sample_binomial,
    sample_discrete_uniform,
    sample_sn,
    sn_from_moments,
    sn_to_moments,
    stick_break,
    t_scale,
    t_variance,
)


# -- skew-normal algebra -------------------------------------------------------


@pytest.mark.parametrize(
    "mean, var, expected",
    [
        (0.0, 0.12, (-0.42, 0.55, 4.0)),
        (0.5, 0.12, (0.08, 0.55, 4.0)),
        (0.0, 2.63, (-1.98, 2.56, 4.0)),
        (0.5, 2.63, (-1.48, 2.56, 4.0)),
    ],
)
def test_sn_from_moments_table_rows(mean, var, expected):
    p = sn_from_moments(SkewNormalMoments(mean, var, 0.785))
    assert round(p.xi, 2) == pytest.approx(expected[0], abs=1e-9)
    assert round(p.omega, 2) == pytest.approx(expected[1], abs=1e-9)
    assert p.shape == pytest.approx(expected[2], abs=0.05)


def test_sn_zero_skew_is_normal():
    p = sn_from_moments(SkewNormalMoments(1.7, 0.36, 0.0))
    assert p.xi == pytest.approx(1.7)
    assert p.omega == pytest.approx(0.6)
    assert p.shape == 0.0


def test_sn_to_moments_inverse_of_scenario_row():
    m = sn_to_moments(SkewNormalParams(-0.42, 0.547, 4.0))
    assert m.mean == pytest.approx(0.0, abs=0.01)
    assert m.var == pytest.approx(0.12, abs=0.002)
    assert m.skew == pytest.approx(0.785, abs=0.002)


def test_sn_to_moments_trivial():
    assert tuple(sn_to_moments(SkewNormalParams(3.0, 1.0, 0.0))) == pytest.approx((3.0, 1.0, 0.0))


def test_sn_moments_against_monte_carlo():
    rng = np.random.default_rng(11)
    n = 10_000_000
    x = sample_sn(SkewNormalParams(0.0, 1.0, 1.0), rng, n)
    m = sn_to_moments(SkewNormalParams(0.0, 1.0, 1.0))
    sd = math.sqrt(m.var)
    assert abs(x.mean() - m.mean) < 3 * sd / math.sqrt(n)
    # standard error of the sample variance ~ sqrt((mu4 - var^2)/n)
    mu4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var() - m.var) < 3 * math.sqrt((mu4 - x.var() ** 2) / n)
    # skewness has an SE near sqrt(6/n) for mild skew
    assert abs(stats.skew(x) - m.skew) < 3 * math.sqrt(6.0 / n) * 1.5


def test_sn_moments_matches_scipy():
    for shape in (-3.0, -0.5, 0.7, 4.0):
        mean, var, skew = stats.skewnorm.stats(shape, loc=0.3, scale=1.4, moments="mvs")
        m = sn_to_moments(SkewNormalParams(0.3, 1.4, shape))
        assert m.mean == pytest.approx(float(mean), rel=1e-12, abs=1e-12)
        assert m.var == pytest.approx(float(var), rel=1e-12)
        assert m.skew == pytest.approx(float(skew), rel=1e-9, abs=1e-12)


def test_sn_from_moments_domain_errors():
    with pytest.raises(ValueError):
        sn_from_moments(SkewNormalMoments(0.0, 1.0, SN_SKEW_MAX))
    with pytest.raises(ValueError):
        sn_from_moments(SkewNormalMoments(0.0, 1.0, -0.9954))
    with pytest.raises(ValueError):
        sn_from_moments(SkewNormalMoments(0.0, 0.0, 0.1))
    assert SN_SKEW_MAX == pytest.approx(0.99527, abs=1e-5)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-5, 5),
    st.floats(1e-3, 20),
    st.floats(-0.95, 0.95),
)
def test_sn_round_trip(mean, var, skew):
    back = sn_to_moments(sn_from_moments(SkewNormalMoments(mean, var, skew)))
    assert back.mean == pytest.approx(mean, abs=1e-10 * max(1.0, math.sqrt(var)))
    assert back.var == pytest.approx(var, rel=1e-10)
    assert back.skew == pytest.approx(skew, abs=1e-10)


# -- t scale -----------------------------------------------------------------


def test_t_scale_examples():
    assert t_scale(2.0, 4.0) == pytest.approx(1.0)
    assert t_scale(0.12, math.inf) == pytest.approx(math.sqrt(0.12))
    assert t_scale(0.12, 1e12) == pytest.approx(math.sqrt(0.12), rel=1e-9)
    assert t_scale(2.63, 10.0) == pytest.approx(math.sqrt(2.104), abs=1e-12)
    assert t_scale(2.63, 10.0) == pytest.approx(1.4506, abs=1e-4)


def test_t_scale_domain():
    with pytest.raises(ValueError):
        t_scale(1.0, 2.0)
    with pytest.raises(ValueError):
        t_scale(1.0, 1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 50), st.floats(2.001, 1e4))
def test_t_scale_round_trip(tau2, nu):
    assert float(t_variance(t_scale(tau2, nu), nu)) == pytest.approx(tau2, rel=1e-12)


# -- stick breaking ----------------------------------------------------------


def test_stick_break_examples():
    assert stick_break([1.0]).p.tolist() == [1.0, 0.0]
    assert stick_break([0.5, 0.5]).p.tolist() == [0.5, 0.25, 0.25]


def test_stick_break_random_normalizes():
    rng = np.random.default_rng(0)
    q = rng.beta(1.0, 2.0, size=49)
    sb = stick_break(q)
    assert sb.p.size == 50
    assert abs(sb.p.sum() - 1.0) < 1e-12


def test_stick_break_rejects_out_of_range():
    with pytest.raises(ValueError):
        stick_break([0.2, 1.2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=80))
def test_stick_break_probability_vector(q):
    p = stick_break(q).p
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    # explicit recursion
    rem = 1.0
    for j, qj in enumerate(q):
        assert p[j] == pytest.approx(qj * rem, abs=1e-15)
        rem *= 1.0 - qj


def test_stick_break_batched():
    q = np.random.default_rng(1).random((7, 5))
    p = stick_break(q).p
    assert p.shape == (7, 6)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_dp_truncation():
    assert dp_truncation(5) == 26
    assert dp_truncation(10) == 51
    assert dp_truncation(1e-12) == 1
    assert dp_truncation(0.3) == math.ceil(1 + 1.5)
    with pytest.raises(ValueError):
        dp_truncation(0.0)


# -- densities ----------------------------------------------------------------


def test_log_density_examples():
    assert float(log_density(DistSpec("normal", (0, 1)), 0.0)) == pytest.approx(-0.5 * math.log(2 * math.pi))
    sn = DistSpec("skew-normal", (0.0, 1.0, 0.0))
    x = np.linspace(-4, 4, 17)
    assert np.allclose(log_density(sn, x), log_density(DistSpec("normal", (0, 1)), x))


def test_student_t_normalizes():
    d = DistSpec("student-t", (0.0, 1.0, 5.0))
    total, err = integrate.quad(lambda x: math.exp(float(log_density(d, x))), -np.inf, np.inf,
                                epsabs=1e-12, epsrel=1e-12)
    assert abs(total - 1.0) < 1e-8
    assert float(log_density(d, 1.3)) == pytest.approx(stats.t.logpdf(1.3, 5.0))


ALL_FAMILIES = [
    DistSpec("normal", (0.5, 1.6)),
    DistSpec("half-normal", (1.0,)),
    DistSpec("uniform", (0.3, 5.0)),
    DistSpec("exponential", (0.1, 2.0)),
    DistSpec("exponential", (2.0,)),
    DistSpec("gamma", (1.0, 1.0)),
    DistSpec("gamma", (2.5, 0.7)),
    DistSpec("student-t", (0.2, 0.8, 3.0)),
    DistSpec("skew-normal", (-0.42, 0.547, 4.0)),
    DistSpec("beta-stick", (1.0, 3.0)),
]


@pytest.mark.parametrize("d", ALL_FAMILIES, ids=str)
def test_every_density_integrates_to_one(d):
    lo = d.lower if math.isfinite(d.lower) else -np.inf
    hi = d.upper if math.isfinite(d.upper) else np.inf
    total, _ = integrate.quad(lambda x: math.exp(float(log_density(d, x))), lo, hi,
                              epsabs=1e-12, epsrel=1e-10, limit=200)
    assert abs(total - 1.0) < 1e-6


@pytest.mark.parametrize(
    "d, x",
    [
        (DistSpec("uniform", (0.0, 10.0)), -0.1),
        (DistSpec("uniform", (0.0, 10.0)), 10.5),
        (DistSpec("half-normal", (1.0,)), -1e-9),
        (DistSpec("gamma", (1.0, 1.0)), -1.0),
        (DistSpec("exponential", (0.1, 2.0)), 1.99),
    ],
)
def test_off_support_is_minus_inf(d, x):
    assert float(log_density(d, x)) == -math.inf


def test_distspec_validation():
    with pytest.raises(ValueError):
        DistSpec("normal", (0.0,))
    with pytest.raises(ValueError):
        DistSpec("normal", (0.0, -1.0))
    with pytest.raises(ValueError):
        DistSpec("uniform", (1.0, 1.0))
    with pytest.raises(ValueError):
        DistSpec("cauchy", (0.0, 1.0))


# -- samplers -------------------------------------------------------------------


def test_normal_sampler_clt_band():
    # variance-form parameters: N(0.5, 2.63)
    rng = np.random.default_rng(3)
    x = sample(DistSpec("normal", (0.5, math.sqrt(2.63))), rng, 1_000_000)
    assert abs(x.mean() - 0.5) < 3 * math.sqrt(2.63 / 1e6)


def test_binomial_zero_risk():
    rng = np.random.default_rng(0)
    assert np.all(sample_binomial(100, 0.0, rng, 50) == 0)


def test_discrete_uniform_inclusive():
    x = sample_discrete_uniform(50, 500, np.random.default_rng(0), 200_000)
    assert x.min() == 50 and x.max() == 500


def test_sn_sampler_skewness():
    p = sn_from_moments(SkewNormalMoments(0.0, 0.12, 0.785))
    x = sample_sn(p, np.random.default_rng(8), 1_000_000)
    assert abs(stats.skew(x) - 0.785) < 0.01
    assert x.mean() == pytest.approx(0.0, abs=3 * math.sqrt(0.12 / 1e6))


@pytest.mark.parametrize("d", ALL_FAMILIES, ids=str)
def test_samplers_reproducible_and_in_support(d):
    a = sample(d, np.random.default_rng(42), 1000)
    b = sample(d, np.random.default_rng(42), 1000)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(log_density(d, a)))
