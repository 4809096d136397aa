import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskval.errors import MissingFeature, ModelFormatError, NonFiniteInput
from riskval.model_core import (
    MedianCutoffs,
    PredictorSpec,
    count_score,
    linear_predictor,
    linear_predictors,
    load_model,
    model_from_dict,
    predict_probability,
    update_intercept,
)

moderate = st.floats(-36, 36, allow_nan=False)


def _model(intercept, coefs):
    return model_from_dict({
        "intercept": intercept,
        "coefficients": dict(coefs),
        "predictors": [{"name": k} for k, _ in coefs],
    })


def test_linear_predictor_zero_coefficients():
    m = _model(-2.5, [("a", 0.0), ("b", 0.0)])
    assert linear_predictor(m, {"a": 0.3, "b": 0.9}) == -2.5


def test_linear_predictor_single_term():
    m = _model(0.0, [("a", 2.0)])
    assert linear_predictor(m, {"a": 0.5}) == 1.0


def test_linear_predictor_matches_hand_sum(rng):
    for _ in range(20):
        names = [f"p{i}" for i in range(7)]
        beta = rng.normal(size=7)
        x = rng.random(7)
        m = _model(float(rng.normal()), list(zip(names, beta)))
        expected = m.intercept
        for b, v in zip(beta, x):
            expected = expected + b * v
        assert linear_predictor(m, dict(zip(names, x))) == expected


def test_vectorized_linear_predictor_is_bitwise_equal(rng, demo):
    feats = {n: rng.random(50) for n in demo.names}
    vec = linear_predictors(demo, feats)
    for i in range(50):
        assert vec[i] == linear_predictor(demo, {k: v[i] for k, v in feats.items()})


def test_missing_feature(simple_model):
    with pytest.raises(MissingFeature) as exc:
        linear_predictor(simple_model, {"male": 1, "x1": 0.2})
    assert exc.value.name == "x2"


def test_probability_known_values():
    assert predict_probability(0.0) == 0.5
    assert predict_probability(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    assert 1 - 1e-14 < predict_probability(34.0) < 1
    assert predict_probability(40.0) == 1.0
    assert 0 < predict_probability(-40.0) < 1e-15
    assert predict_probability(-800.0) >= 0


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_probability_rejects_non_finite(bad):
    with pytest.raises(NonFiniteInput):
        predict_probability(bad)


@given(st.floats(-700, 700), st.floats(-700, 700))
def test_probability_monotone(a, b):
    pa, pb = predict_probability(a), predict_probability(b)
    assert 0 <= pa <= 1
    if a < b:
        assert pa <= pb


@given(moderate)
def test_probability_open_interval_moderate_lp(lp):
    assert 0 < predict_probability(lp) < 1


def test_update_intercept(simple_model):
    assert update_intercept(simple_model, 0.0) == simple_model
    m = update_intercept(_model(-3.0, [("a", 1.0)]), 1.40)
    assert m.intercept == pytest.approx(-1.60, abs=1e-12)
    updated = update_intercept(simple_model, 0.7)
    assert simple_model.intercept == -1.0
    assert updated.coefficients == simple_model.coefficients
    with pytest.raises(NonFiniteInput):
        update_intercept(simple_model, float("nan"))


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_update_intercept_additive(d1, d2):
    m = _model(-1.25, [("a", 1.0)])
    assert update_intercept(update_intercept(m, d1), d2).intercept == pytest.approx(
        update_intercept(m, d1 + d2).intercept, abs=1e-12)


def test_update_preserves_ranking(rng, simple_model):
    feats = {"male": rng.integers(0, 2, 100), "x1": rng.random(100), "x2": rng.random(100)}
    before = predict_probability(linear_predictors(simple_model, feats))
    after = predict_probability(linear_predictors(update_intercept(simple_model, 1.4), feats))
    assert np.array_equal(np.argsort(before, kind="stable"), np.argsort(after, kind="stable"))


def test_probability_increases_with_positive_term(rng):
    for _ in range(50):
        x = rng.random()
        b1, b2 = sorted(rng.normal(size=2))
        if b1 == b2:
            continue
        p1 = predict_probability(linear_predictor(_model(-1.0, [("a", b1)]), {"a": x + 0.01}))
        p2 = predict_probability(linear_predictor(_model(-1.0, [("a", b2)]), {"a": x + 0.01}))
        assert p1 < p2


CUTS = MedianCutoffs({"ace": 0.2, "neuroticism": 0.5, "conscientiousness": 0.6,
                      "openness": 0.6, "delinquency": 0.1, "peer_cannabis_use": 0.0})


def test_count_score_extremes():
    risk = {"ace": 1.0, "neuroticism": 1.0, "conscientiousness": 0.0, "openness": 1.0,
            "delinquency": 1.0, "peer_cannabis_use": 0.5}
    safe = {"ace": 0.0, "neuroticism": 0.0, "conscientiousness": 1.0, "openness": 0.0,
            "delinquency": 0.0, "peer_cannabis_use": -0.5}
    assert count_score(risk, CUTS, 1) == 7
    assert count_score(safe, CUTS, 0) == 0


def test_count_score_ties_are_not_risk():
    at_cut = dict(CUTS.cutoffs)
    assert count_score(at_cut, CUTS, 0) == 0


def test_count_score_matches_indicator_table(rng):
    names = list(CUTS.cutoffs)
    for _ in range(200):
        x = {n: float(rng.uniform(-0.5, 1.0)) for n in names}
        sex = int(rng.integers(0, 2))
        table = {
            "male": sex == 1,
            "ace": x["ace"] > 0.2,
            "neuroticism": x["neuroticism"] > 0.5,
            "conscientiousness": x["conscientiousness"] < 0.6,
            "openness": x["openness"] > 0.6,
            "delinquency": x["delinquency"] > 0.1,
            "peer_cannabis_use": x["peer_cannabis_use"] > 0.0,
        }
        assert count_score(x, CUTS, sex) == sum(table.values())


def test_count_score_missing():
    with pytest.raises(MissingFeature):
        count_score({"ace": 0.1}, CUTS, 0)


def test_cutoffs_from_features(demo, rng):
    feats = {n: rng.random(11) for n in demo.names}
    cuts = MedianCutoffs.from_features(demo, feats)
    assert set(cuts.cutoffs) == set(demo.continuous_predictors)
    assert "male" not in cuts.cutoffs
    assert cuts.cutoffs["ace"] == np.median(feats["ace"])


def test_predictor_spec_invariants():
    with pytest.raises(ModelFormatError):
        PredictorSpec("a", kind="cross_sectional", summarizer="wave_mean")
    with pytest.raises(ModelFormatError):
        PredictorSpec("a", kind="longitudinal", summarizer="identity")
    with pytest.raises(ModelFormatError):
        PredictorSpec("a", range="percent")


def test_model_file_round_trip(tmp_path, demo):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(demo.to_dict()))
    assert load_model(path) == demo


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["predictors"][0].update(colour="red"),
    lambda d: d["coefficients"].pop("ace"),
    lambda d: d["predictors"].append(dict(d["predictors"][0])),
    lambda d: d.pop("intercept"),
])
def test_model_file_rejects_bad_documents(demo, mutate):
    doc = json.loads(json.dumps(demo.to_dict()))
    mutate(doc)
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)


def test_coefficient_order_follows_predictor_list():
    m = model_from_dict({
        "intercept": 0,
        "coefficients": {"b": 2.0, "a": 1.0},
        "predictors": [{"name": "a"}, {"name": "b"}],
    })
    assert m.names == ["a", "b"]
