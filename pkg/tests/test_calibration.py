import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cohort_from_arrays, self_calibrated_labels
from riskval.calibration import (
    EoEntry,
    balanced_partition,
    calibration_curve,
    expected_observed,
    median_split,
    median_split_eo,
    recalibrate,
    risk_quantile_groups,
    sex_eo,
    subgroup_tables,
)
from riskval.errors import DegenerateLabels, InputError, TooFewSubjects, ZeroObserved
from riskval.model_core import update_intercept


def test_eo_ratio_examples():
    assert round(EoEntry("Male", 298, 40.082, 41).ratio, 3) == 0.978
    assert round(EoEntry("Group 1", 128, 9.074, 3).ratio, 3) == 3.025
    y = np.array([0, 1, 1, 0, 1])
    assert expected_observed(y.astype(float), y).ratio == 1.0


def test_zero_observed():
    e = expected_observed([0.1, 0.2], [0, 0])
    assert e.ratio is None
    assert e.expected == pytest.approx(0.3)
    with pytest.raises(ZeroObserved):
        e.require_ratio()
    assert e.to_dict()["ratio"] is None


def test_eo_input_checks():
    with pytest.raises(InputError):
        expected_observed([1.2], [1])
    with pytest.raises(InputError):
        expected_observed([0.2], [3])
    with pytest.raises(InputError):
        expected_observed([0.2, 0.1], [1])


@pytest.mark.parametrize("n,k,sizes", [
    (424, 5, [85, 85, 84, 85, 85]),
    (637, 5, [128, 127, 127, 127, 128]),
    (10, 5, [2] * 5),
    (7, 3, [3, 2, 2]),
    (8, 3, [3, 2, 3]),
])
def test_partition_sizes(n, k, sizes):
    assert balanced_partition(n, k) == sizes


@given(st.integers(1, 2000), st.integers(1, 20))
def test_partition_property(n, k):
    if n < k:
        with pytest.raises(TooFewSubjects):
            balanced_partition(n, k)
        return
    sizes = balanced_partition(n, k)
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sizes[::-1] or sizes[0] >= sizes[-1]


def test_quantile_groups_sorted_pairs():
    p = np.linspace(0.05, 0.95, 10)
    y = np.array([0, 0, 0, 1, 0, 1, 1, 0, 1, 1])
    groups = risk_quantile_groups(p, y, 5)
    assert [g.n for g in groups] == [2] * 5
    assert [g.observed for g in groups] == [0, 1, 1, 1, 2]
    assert groups[0].expected == pytest.approx(p[0] + p[1])
    assert [g.group for g in groups] == [f"Group {i}" for i in range(1, 6)]


def test_quantile_groups_additive(rng):
    p = rng.random(424) * 0.3
    y = rng.integers(0, 2, 424)
    groups = risk_quantile_groups(p, y)
    total = groups[0]
    for g in groups[1:]:
        total = total + g
    overall = expected_observed(p, y)
    assert total.n == overall.n and total.observed == overall.observed
    assert total.expected == pytest.approx(overall.expected, abs=1e-10)


def test_quantile_groups_too_few():
    with pytest.raises(TooFewSubjects):
        risk_quantile_groups([0.1, 0.2], [0, 1], 5)


def test_median_split_examples():
    below, above, med = median_split([1, 2, 3, 4])
    assert below.tolist() == [True, True, False, False] and med == 2.5
    b, a = median_split_eo([5, 5, 5], [0.1, 0.2, 0.3], [0, 1, 0])
    assert b.n == 3 and a.n == 0 and a.ratio is None


def test_median_split_matches_sort_oracle(rng):
    for _ in range(20):
        v = rng.integers(0, 8, int(rng.integers(1, 40))).astype(float)
        below, above, _ = median_split(v)
        srt = sorted(v)
        n = len(srt)
        med = srt[n // 2] if n % 2 else (srt[n // 2 - 1] + srt[n // 2]) / 2
        assert below.tolist() == [x <= med for x in v]
        assert (below | above).all() and not (below & above).any()


def test_sex_eo():
    male, female = sex_eo([1, 0, 1, 0], [0.1, 0.2, 0.3, 0.4], [1, 0, 0, 1])
    assert (male.n, male.observed) == (2, 1)
    assert male.expected == pytest.approx(0.4)
    assert (female.n, female.observed) == (2, 1)


def test_calibration_curve_counts_and_order(rng):
    p = rng.random(1003)
    y = rng.integers(0, 2, 1003)
    cc = calibration_curve(p, y)
    assert sum(b.count for b in cc.bins) == 1003
    means = [b.mean_pred for b in cc.bins]
    assert means == sorted(means)
    assert sum(h.count for h in cc.histogram) == 1003
    assert len(cc.histogram) == 40


def test_calibration_curve_perfect_predictions():
    y = np.array([0] * 50 + [1] * 50)
    cc = calibration_curve(y.astype(float), y)
    for b in cc.bins:
        assert b.mean_pred == b.event_rate and b.mean_pred in (0.0, 1.0)


def test_calibration_curve_constant_model():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0] * 10)
    cc = calibration_curve(np.full(100, 0.3), y)
    assert all(b.mean_pred == pytest.approx(0.3, abs=1e-15) for b in cc.bins)
    rate = sum(b.event_rate * b.count for b in cc.bins) / 100
    assert rate == pytest.approx(0.3)


def test_calibration_curve_self_consistent():
    rng = np.random.default_rng(5)
    lp = rng.normal(-1, 1.2, 10_000)
    y = self_calibrated_labels(lp, rng)
    cc = calibration_curve(1 / (1 + np.exp(-lp)), y)
    assert max(abs(b.mean_pred - b.event_rate) for b in cc.bins) < 0.05
    with pytest.raises(TooFewSubjects):
        calibration_curve([0.1] * 5, [0, 1, 0, 1, 0])


def _cohort(rng, model, n, shift=0.0):
    feats = {"male": rng.integers(0, 2, n).astype(float), "x1": rng.random(n), "x2": rng.random(n)}
    lp = model.intercept + 0.5 * feats["male"] + 1.5 * feats["x1"] - 2.0 * feats["x2"]
    y = self_calibrated_labels(lp + shift, rng)
    return cohort_from_arrays(y, feats, sex=feats["male"])


def test_recalibration_sets_eo_to_one(rng, simple_model):
    for shift in (0.0, 1.4, -0.5):
        cohort = _cohort(rng, simple_model, 800, shift)
        rec = recalibrate(simple_model, cohort)
        assert abs(rec.after.ratio - 1) < 1e-6
        assert rec.model.intercept == pytest.approx(simple_model.intercept + rec.fit.intercept)
        assert rec.model.coefficients == simple_model.coefficients
        d = rec.to_dict()
        assert d["intercept_before"] == pytest.approx(simple_model.intercept)


def test_recalibration_calibrated_model_is_near_unchanged(rng, simple_model):
    cohort = _cohort(rng, simple_model, 500)
    first = recalibrate(simple_model, cohort)
    second = recalibrate(first.model, cohort)
    assert abs(second.fit.intercept) < 1e-7


def test_shift_recovery(simple_model):
    rng = np.random.default_rng(21)
    model = update_intercept(simple_model, -1.4)
    cohort = _cohort(rng, model, 5000, shift=1.4)
    assert recalibrate(model, cohort).fit.intercept == pytest.approx(1.4, abs=0.15)


def test_recalibration_needs_both_classes(simple_model):
    cohort = cohort_from_arrays([0, 0, 0], {"male": [0, 1, 0], "x1": [0.1] * 3, "x2": [0.2] * 3})
    with pytest.raises(DegenerateLabels):
        recalibrate(simple_model, cohort)


def test_recalibration_constant_lp(simple_model):
    cohort = cohort_from_arrays([0, 1, 0, 0], {"male": [0] * 4, "x1": [0.1] * 4, "x2": [0.2] * 4})
    rec = recalibrate(simple_model, cohort)
    assert rec.fit.slope is None
    assert abs(rec.after.ratio - 1) < 1e-6


def test_subgroup_tables(rng, simple_model):
    cohort = _cohort(rng, simple_model, 100)
    probs = cohort.probabilities(simple_model)
    tables = subgroup_tables(cohort, probs, 5, ["x1", "x2"])
    assert [t[0] for t in tables] == ["Risk quantile groups", "Biological sex", "x1", "x2"]
    for _, rows in tables:
        assert sum(r.n for r in rows) == 100
        assert sum(r.observed for r in rows) == cohort.case_count
