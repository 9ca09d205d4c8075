import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaflex.core import FitResult
from metaflex.datagen import ScenarioSpec, get_scenario
from metaflex.metrics import (
    PERFORMANCE_COLUMNS,
    aggregate,
    apply_exclusion_rule,
    coverage_band,
    excluded_row,
    true_moments,
)


def fit(mu, tau2=0.1, half=0.2, converged=True, theta=None, theta_half=0.1):
    th = None if theta is None else np.asarray(theta, float)
    th_ci = None if th is None else np.column_stack([th - theta_half, th + theta_half])
    return FitResult("m", mu, (mu - half, mu + half), tau2, (max(tau2 - half, 0.0), tau2 + half),
                     theta=th, theta_ci=th_ci, converged=converged)


def test_true_moments():
    assert true_moments(get_scenario(1)) == (0.0, 0.12)
    mu, t2 = true_moments(get_scenario(17))
    assert mu == pytest.approx(0.7) and t2 == pytest.approx(0.2495)
    s = ScenarioSpec(99, "mixture2", (0.5, 0.5), (0.1, 0.3), 10, weights=(0.4, 0.6))
    assert true_moments(s)[1] == pytest.approx(0.4 * 0.1 + 0.6 * 0.3)


def test_coverage_band_values():
    lo, hi = coverage_band(1000)
    assert (round(lo, 4), round(hi, 4)) == (0.9365, 0.9635)
    lo, hi = coverage_band(300)
    assert (round(lo, 4), round(hi, 4)) == (0.9253, 0.9747)
    lo, hi = coverage_band(10**12)
    assert lo == pytest.approx(0.95, abs=1e-6) and hi == pytest.approx(0.95, abs=1e-6)
    with pytest.raises(ValueError):
        coverage_band(0)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_coverage_band_symmetric_and_shrinking(a, b):
    lo, hi = coverage_band(a)
    assert (0.95 - lo) == pytest.approx(hi - 0.95)
    if a < b:
        assert coverage_band(b)[1] - coverage_band(b)[0] < hi - lo


def test_aggregate_trivial_cases():
    r = aggregate([fit(0.3), fit(0.3)], 0.3, "mu")
    assert (r.mean_bias, r.coverage, r.mse) == (0.0, 1.0, 0.0)
    r = aggregate([fit(0.4), fit(0.4), fit(0.4)], 0.3, "mu")
    assert r.mean_bias == pytest.approx(0.1) and r.mse == pytest.approx(0.01)
    with pytest.raises(ValueError):
        aggregate([], 0.0, "mu")
    with pytest.raises(ValueError):
        aggregate([fit(0.0)], 0.0, "sigma")


def test_aggregate_against_hand_computation():
    # five replicates, truth tau2 = 0.12, interval half-width 0.2
    ests = [0.10, 0.30, 0.05, 0.50, 0.12]
    r = aggregate([fit(0.0, tau2=e) for e in ests], 0.12, "tau2", scenario_id=1, n_failed=2)
    diffs = [-0.02, 0.18, -0.07, 0.38, 0.00]
    bias = sum(diffs) / 5
    mse = sum(d * d for d in diffs) / 5
    # intervals: [0,0.3] [0.1,0.5] [0,0.25] [0.3,0.7] [0,0.32]; 0.12 misses only the 4th
    assert r.mean_bias == pytest.approx(bias)
    assert r.mse == pytest.approx(mse)
    assert r.coverage == pytest.approx(4 / 5)
    assert r.pct_bias == pytest.approx(bias / 0.12)
    assert r.normalized_mse == pytest.approx(mse / 0.0144)
    assert (r.n_used, r.n_failed, r.excluded) == (5, 2, False)
    assert r.abs_mean_bias == pytest.approx(abs(bias))


def test_study_effects_average_within_then_across():
    f1 = fit(0.0, theta=[0.1, 0.2])            # errors 0.1, 0.2
    f2 = fit(0.0, theta=[0.0, 0.0, 0.0, 0.6])  # errors 0, 0, 0, 0.6
    r = aggregate([f1, f2], [np.zeros(2), np.zeros(4)], "study_effects")
    assert r.mean_bias == pytest.approx((0.15 + 0.15) / 2)
    assert r.mse == pytest.approx(((0.01 + 0.04) / 2 + 0.36 / 4) / 2)
    assert r.coverage == pytest.approx(4 / 6)
    assert math.isnan(r.pct_bias)


def test_missing_intervals_give_nan_coverage():
    f = FitResult("m", 0.1, None, 0.1)
    r = aggregate([f, fit(0.1)], 0.1, "mu")
    assert math.isnan(r.coverage) and r.mean_bias == pytest.approx(0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0, 3)), min_size=1, max_size=20), st.randoms())
def test_aggregate_permutation_invariant_and_exact_ratios(vals, rnd):
    fits = [fit(m, tau2=t) for m, t in vals]
    a = aggregate(fits, 0.25, "tau2")
    rnd.shuffle(fits)
    b = aggregate(fits, 0.25, "tau2")
    assert a.mean_bias == pytest.approx(b.mean_bias, abs=1e-12)
    assert a.mse == pytest.approx(b.mse, abs=1e-12)
    assert a.coverage == b.coverage
    assert a.pct_bias * 0.25 == pytest.approx(a.mean_bias, rel=1e-15, abs=1e-15)
    assert a.normalized_mse * 0.25**2 == pytest.approx(a.mse, rel=1e-15, abs=1e-15)


def _results(n_conv, n_total):
    return [fit(0.0, converged=i < n_conv) for i in range(n_total)]


def test_exclusion_rule_boundaries():
    kept, log = apply_exclusion_rule({"a": _results(960, 1000), "b": _results(949, 1000),
                                      "c": _results(950, 1000), "d": _results(10, 10)})
    assert not log["a"].excluded and len(kept["a"]) == 960 and log["a"].failed == 40
    assert log["b"].excluded and kept["b"] == []
    assert not log["c"].excluded
    assert not log["d"].excluded and len(kept["d"]) == 10


def test_exclusion_rule_counts_fitter_crashes_as_failures():
    fits = _results(19, 19) + [None]
    kept, log = apply_exclusion_rule({"k": fits})
    assert log["k"].attempted == 20 and log["k"].converged == 19 and not log["k"].excluded
    kept, log = apply_exclusion_rule({"k": fits + [None]})
    assert log["k"].excluded


def test_csv_row_format():
    r = excluded_row(2, "m", "mu", 10, 190)
    row = dict(zip(PERFORMANCE_COLUMNS, r.as_csv_row()))
    assert row["excluded"] == "true" and row["mean_bias"] == "" and row["n_failed"] == "190"
    assert PERFORMANCE_COLUMNS[:11] == ("scenario_id", "model_id", "estimand", "mean_bias", "coverage",
                                        "mse", "pct_bias", "normalized_mse", "n_used", "n_failed",
                                        "excluded")
