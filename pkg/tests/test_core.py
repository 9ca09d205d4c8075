import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaflex.core import (
    BAYES_MODEL_IDS,
    FREQ_MODEL_IDS,
    MODEL_IDS,
    ArmData,
    DataError,
    DatasetTooSmallError,
    EffectRow,
    FitResult,
    MetaDataset,
    StudyExclusionError,
    compute_effects,
    effect_arrays,
    get_model_spec,
    read_arm_csv,
    validate_dataset,
)


def _one(t, mt, c, mc, cc=0.5):
    return compute_effects(MetaDataset((ArmData("s", t, mt, c, mc),)), cc=cc)[0]


def test_symmetric_arms_give_zero_effect():
    r = _one(10, 100, 10, 100)
    assert r.y == 0.0
    assert r.v == pytest.approx(2 * (1 / 10 + 1 / 90))
    assert r.v == pytest.approx(0.2222, abs=1e-4)
    assert not r.continuity_corrected


def test_zero_cell_correction_hits_all_four_cells():
    r = _one(0, 10, 5, 10)
    assert r.y == pytest.approx(math.log((0.5 * 5.5) / (10.5 * 5.5)))
    assert r.y == pytest.approx(-3.0445, abs=1e-4)
    assert r.v == pytest.approx(1 / 0.5 + 1 / 10.5 + 1 / 5.5 + 1 / 5.5)
    assert r.continuity_corrected


def test_identical_arms():
    assert _one(50, 100, 50, 100).y == 0.0


def test_correction_parameter_is_used():
    a = _one(0, 10, 5, 10, cc=0.5).y
    b = _one(0, 10, 5, 10, cc=0.25).y
    assert a != b
    assert b == pytest.approx(math.log((0.25 * 5.25) / (10.25 * 5.25)))


def test_double_zero_rejected_with_study_id():
    with pytest.raises(StudyExclusionError) as exc:
        compute_effects(MetaDataset((ArmData("dz", 0, 200, 0, 200),)))
    assert exc.value.study_id == "dz"
    with pytest.raises(StudyExclusionError):
        compute_effects(MetaDataset((ArmData("full", 20, 20, 30, 30),)))


def test_arm_validation():
    with pytest.raises(DataError):
        ArmData("x", 11, 10, 1, 10)
    with pytest.raises(DataError):
        ArmData("x", 1, 0, 1, 10)
    with pytest.raises(DataError):
        ArmData("x", 1.5, 10, 1, 10)
    with pytest.raises(DataError):
        MetaDataset((ArmData("a", 1, 10, 1, 10), ArmData("a", 2, 10, 1, 10)))


def test_validate_dataset_drops_double_zero():
    rng = np.random.default_rng(0)
    studies = [ArmData(f"s{i}", int(rng.integers(1, 30)), 200, int(rng.integers(1, 30)), 200) for i in range(13)]
    studies.insert(5, ArmData("empty", 0, 200, 0, 200))
    d, report = validate_dataset(MetaDataset(tuple(studies)))
    assert len(d) == 13
    assert [r["study_id"] for r in report] == ["empty"]
    assert "empty" not in d.study_ids


def test_validate_identity_and_too_small():
    d = MetaDataset((ArmData("a", 1, 10, 2, 10), ArmData("b", 3, 10, 2, 10)))
    out, report = validate_dataset(d)
    assert out is d and report == []
    with pytest.raises(DatasetTooSmallError):
        validate_dataset(MetaDataset((ArmData("a", 0, 10, 0, 10), ArmData("b", 0, 10, 0, 12))))


def test_validate_keeps_true_effects_aligned():
    d = MetaDataset(
        (ArmData("a", 1, 10, 2, 10), ArmData("z", 0, 10, 0, 10), ArmData("b", 3, 10, 2, 10)),
        true_effects=np.array([0.1, 0.2, 0.3]),
    )
    out, _ = validate_dataset(d)
    assert out.true_effects.tolist() == [0.1, 0.3]


counts = st.tuples(st.integers(1, 200), st.integers(1, 200)).flatmap(
    lambda ns: st.tuples(st.integers(0, ns[0]), st.just(ns[0]), st.integers(0, ns[1]), st.just(ns[1]))
).filter(lambda c: not (c[0] == 0 and c[2] == 0) and not (c[0] == c[1] and c[2] == c[3]))


@settings(max_examples=100, deadline=None)
@given(st.lists(counts, min_size=2, max_size=8), st.randoms())
def test_compute_effects_order_invariant(rows, rnd):
    studies = [ArmData(f"s{i}", *r) for i, r in enumerate(rows)]
    a = {e.study_id: e for e in compute_effects(MetaDataset(tuple(studies)))}
    rnd.shuffle(studies)
    b = {e.study_id: e for e in compute_effects(MetaDataset(tuple(studies)))}
    assert a == b


@settings(max_examples=200, deadline=None)
@given(counts)
def test_correction_fires_iff_zero_cell(c):
    t, mt, cc_, mc = c
    r = _one(t, mt, cc_, mc)
    has_zero = min(t, mt - t, cc_, mc - cc_) == 0
    assert r.continuity_corrected == has_zero
    cells = np.array([t, mt - t, cc_, mc - cc_], float) + (0.5 if has_zero else 0.0)
    assert r.v == pytest.approx(float(np.sum(1 / cells)))


def test_effect_arrays_forms():
    rows = [EffectRow("a", 0.1, 0.2), EffectRow("b", -0.3, 0.5)]
    y, v = effect_arrays(rows)
    assert y.tolist() == [0.1, -0.3] and v.tolist() == [0.2, 0.5]
    y2, v2 = effect_arrays((np.array([0.1, -0.3]), np.array([0.2, 0.5])))
    assert np.array_equal(y, y2) and np.array_equal(v, v2)
    with pytest.raises(ValueError):
        effect_arrays(([0.1], [0.0]))


def test_read_arm_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("study_id,events_trt,n_trt,events_ctrl,n_ctrl\nA,1,10,2,10\nB,3,12,4,12\n")
    d = read_arm_csv(p)
    assert d.study_ids == ["A", "B"]
    bad = tmp_path / "bad.csv"
    bad.write_text("study_id,events_trt,n_trt,events_ctrl,n_ctrl\nA,1,10,2,10\nB,x,12,4,12\n")
    with pytest.raises(DataError) as exc:
        read_arm_csv(bad)
    assert "line 3" in str(exc.value) and exc.value.study_id == "B"
    worse = tmp_path / "worse.csv"
    worse.write_text("id,a,b\n1,2,3\n")
    with pytest.raises(DataError):
        read_arm_csv(worse)


# -- registry ------------------------------------------------------------------


def test_registry_counts():
    assert len(MODEL_IDS) == 15
    assert len(BAYES_MODEL_IDS) == 11
    assert len(FREQ_MODEL_IDS) == 4


@pytest.mark.parametrize(
    "model_id, keys",
    [
        ("binomial-normal(HN)", {"mu", "tau"}),
        ("binomial-t(Unif)", {"mu", "omega", "nu"}),
        ("binomial-SN(HN)", {"xi", "omega", "gamma"}),
        ("binomial-DP-26(HN/Unif)", {"mu_b", "tau_b", "alpha"}),
        ("normal-normal(REML)", set()),
    ],
)
def test_prior_keys(model_id, keys):
    assert set(get_model_spec(model_id).priors) == keys


def test_prior_values():
    t = get_model_spec("binomial-t(Unif)")
    assert (t.priors["omega"].family, t.priors["omega"].params) == ("uniform", (0.0, 10.0))
    assert (t.priors["nu"].family, t.priors["nu"].params) == ("exponential", (0.1, 2.0))
    assert t.priors["mu"].params == (0.0, 100.0)
    sn = get_model_spec("binomial-SN(HN)")
    assert sn.priors["gamma"].params == (0.0, 5.0)
    dp = get_model_spec("binomial-DP-51(Unif/Unif)")
    assert dp.dp_truncation == 51 and dp.priors["alpha"].params == (0.3, 10.0)
    g = get_model_spec("binomial-DP-n(Unif/Gamma)")
    assert g.dp_truncation == "n" and g.priors["alpha"].family == "gamma"


def test_lookup_is_forgiving_but_rejects_unknown():
    assert get_model_spec(" Binomial-Normal(hn) ").model_id == "binomial-normal(HN)"
    with pytest.raises(KeyError):
        get_model_spec("binomial-cauchy")


# -- FitResult -----------------------------------------------------------------


def test_fitresult_invariants():
    with pytest.raises(ValueError):
        FitResult("m", 0.0, mu_ci=(0.2, -0.2))
    with pytest.raises(ValueError):
        FitResult("m", 0.0, tau2=-0.1)
    assert FitResult("m", 0.0, tau2=-1e-15).tau2 == 0.0


def test_fitresult_json_round_trip():
    f = FitResult(
        "m", 0.123456789012345, (-0.1, 0.3), 0.2, (0.01, 1.5),
        theta=np.array([0.1, 1 / 3]), theta_ci=np.array([[0.0, 0.2], [0.1, 0.6]]),
        study_ids=["a", "b"], extras={"nu": 4.2, "w": np.array([0.3, 0.7])},
        diagnostics={"rhat_max": 1.01},
    )
    g = FitResult.from_json(f.to_json())
    assert g.mu == f.mu and g.mu_ci == f.mu_ci and g.tau2_ci == f.tau2_ci
    assert np.array_equal(g.theta, f.theta) and np.array_equal(g.theta_ci, f.theta_ci)
    assert g.extras["w"] == [0.3, 0.7]
    assert g.to_json() == f.to_json()
