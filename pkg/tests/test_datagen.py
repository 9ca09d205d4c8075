import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from metaflex.datagen import (
    GenConfig,
    ScenarioSpec,
    builtin_scenarios,
    draw_true_effects,
    generate_dataset,
    get_scenario,
    risk_transform,
)
from metaflex.distributions import sn_to_moments
from metaflex.metrics import true_moments


def test_catalogue_shape():
    sc = builtin_scenarios()
    assert [s.scenario_id for s in sc] == list(range(1, 23))
    kinds = [s.re_kind for s in sc]
    assert kinds.count("normal") == 8 and kinds.count("skew-normal") == 8 and kinds.count("mixture2") == 6
    s1 = get_scenario(1)
    assert (s1.re_kind, s1.mu, s1.tau2, s1.n_studies) == ("normal", (0.0,), (0.12,), 14)
    assert get_scenario(2).tau2 == (2.63,)
    s17 = get_scenario(17)
    assert s17.weights == (0.3, 0.7) and s17.mu == (0.0, 1.0) and s17.tau2 == (0.12, 0.005)
    with pytest.raises(KeyError):
        get_scenario(23)


@pytest.mark.parametrize("sid", range(9, 17))
def test_skew_scenarios_match_target_moments(sid):
    s = get_scenario(sid)
    m = sn_to_moments(s.sn_params)
    assert m.mean == pytest.approx(s.mu[0], abs=1e-12)
    assert m.var == pytest.approx(s.tau2[0], rel=1e-12)
    assert m.skew == pytest.approx(0.785, abs=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(99, "normal", (0.0,), (-1.0,), 14)
    with pytest.raises(ValueError):
        ScenarioSpec(99, "mixture2", (0.0, 1.0), (0.1, 0.1), 14, weights=(0.5, 0.6))
    with pytest.raises(ValueError):
        ScenarioSpec(99, "skew-normal", (0.0,), (0.1,), 14)
    with pytest.raises(ValueError):
        GenConfig(risk_range=(0.0, 0.5))


@pytest.mark.parametrize("sid", [1, 2, 10, 17, 22])
def test_true_effect_moments(sid):
    s = get_scenario(sid)
    th = draw_true_effects(s, np.random.default_rng(sid), size=200_000)
    mu, tau2 = true_moments(s)
    assert th.mean() == pytest.approx(mu, abs=5 * np.sqrt(tau2 / th.size) + 1e-3)
    assert th.var() == pytest.approx(tau2, rel=0.03)


def test_normal_effects_pass_ks():
    s = get_scenario(2)
    th = draw_true_effects(s, np.random.default_rng(3), size=20_000)
    assert stats.kstest(th, "norm", args=(0.0, np.sqrt(2.63))).pvalue > 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-5, 5))
def test_risk_transform_shifts_log_odds(rho, theta):
    r = risk_transform(rho, theta)
    assert 0 <= r <= 1
    if 1e-12 < r < 1 - 1e-12:
        assert np.log(r / (1 - r)) - np.log(rho / (1 - rho)) == pytest.approx(theta, abs=1e-6)


def test_risk_transform_zero_shift_is_identity():
    rho = np.linspace(0.05, 0.65, 7)
    assert np.allclose(risk_transform(rho, 0.0), rho)
    with pytest.raises(ValueError):
        risk_transform(1.0, 0.1)


def test_generate_dataset_ranges_and_determinism():
    s = get_scenario(1)
    d1, th1 = generate_dataset(s, GenConfig(), np.random.default_rng(11))
    d2, th2 = generate_dataset(s, GenConfig(), np.random.default_rng(11))
    assert d1.studies == d2.studies and np.array_equal(th1, th2)
    t, mt, c, mc = d1.arrays()
    assert np.array_equal(mt, mc)
    assert mt.min() >= 50 and mt.max() <= 500
    assert len(d1) == th1.size <= 14


def test_generate_dataset_drops_double_zero():
    s = get_scenario(1)
    g = GenConfig(size_range=(5, 6), risk_range=(0.02, 0.04))
    d, th = generate_dataset(s, g, np.random.default_rng(0), theta=np.zeros(14))
    assert len(d) < 14
    assert len(d) == th.size
    t, _, c, _ = d.arrays()
    assert np.all((t + c) > 0)
