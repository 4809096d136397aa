import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cohort_from_arrays, self_calibrated_labels
from riskval.calibration import EoEntry
from riskval.errors import InvariantViolation
from riskval.report import (
    ValidationReport,
    _check_totals,
    atomic_write,
    build_validation,
    eo_row,
    fmt6,
    sig6,
    write_validation,
)


def test_sig6():
    assert sig6(None) is None
    assert sig6(0.123456789) == 0.123457
    assert sig6(123456789.0) == 123457000.0
    assert math.isinf(sig6(float("inf")))
    assert fmt6(None) == "NA" and fmt6(1 / 3) == "0.333333"


@given(st.floats(-1e12, 1e12, allow_nan=False))
def test_sig6_idempotent_and_json_stable(x):
    y = sig6(x)
    assert sig6(y) == y
    assert json.loads(json.dumps(y)) == y


def test_eo_row_uses_rounded_expected():
    row = eo_row(EoEntry("Male", 298, 40.08249, 41))
    assert row == {"group": "Male", "n": 298, "expected": 40.0825, "observed": 41, "ratio": 0.978}
    assert eo_row(EoEntry("x", 3, 0.2, 0))["ratio"] is None


def test_totals_invariant():
    overall = EoEntry("overall", 4, 1.0, 2)
    _check_totals(overall, [EoEntry("a", 2, 0.4, 1), EoEntry("b", 2, 0.6, 1)], "ok")
    with pytest.raises(InvariantViolation):
        _check_totals(overall, [EoEntry("a", 2, 0.4, 1)], "short")


def _artifacts(simple_model, n=300, seed=1):
    rng = np.random.default_rng(seed)
    feats = {"male": rng.integers(0, 2, n).astype(float), "x1": rng.random(n), "x2": rng.random(n)}
    lp = -1.0 + 0.5 * feats["male"] + 1.5 * feats["x1"] - 2.0 * feats["x2"]
    cohort = cohort_from_arrays(self_calibrated_labels(lp + 0.7, rng), feats, sex=feats["male"])
    return build_validation(simple_model, cohort, inputs={"cohort": "abc"})


def test_build_validation_contents(simple_model):
    art = _artifacts(simple_model)
    r = art.report
    assert r.cohort["n"] == 300
    assert sum(row["n"] for row in r.quantile_table) == 300
    assert set(r.median_tables) == {"x1", "x2"}
    assert r.calibration["intercept"] > 0
    assert r.auc["ci_low"] <= r.auc["auc"] <= r.auc["ci_high"]
    assert r.count_score["cutoff_source"] == "validation cohort medians"


def test_report_json_round_trip(simple_model):
    r = _artifacts(simple_model).report
    again = ValidationReport.from_json(r.to_json())
    assert again == r
    assert again.to_json() == r.to_json()


def test_write_validation_files(simple_model, tmp_path):
    write_validation(_artifacts(simple_model), tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["calibration.svg", "calibration_curve.csv", "eo_table.csv", "histogram.csv",
                     "report.json", "roc.csv"]
    assert (tmp_path / "calibration.svg").read_text().startswith("<svg")
    assert not list(tmp_path.glob("*.tmp"))


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]
