"""Expected/observed tables, calibration curve data and intercept recalibration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateLabels, InputError, TooFewSubjects, ZeroObserved
from .glm import CalibrationFit, calibration_fit, calibration_intercept_fit
from .model_core import ModelSpec, predict_probability, update_intercept

HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class EoEntry:
    group: str
    n: int
    expected: float
    observed: int

    @property
    def ratio(self) -> float | None:
        """E/O, or None when no events were observed."""
        if self.observed == 0:
            return None
        return self.expected / self.observed

    def require_ratio(self) -> float:
        if self.observed == 0:
            raise ZeroObserved(f"group {self.group!r}: no observed events, E/O undefined")
        return self.expected / self.observed

    def __add__(self, other: "EoEntry") -> "EoEntry":
        return EoEntry(f"{self.group}+{other.group}", self.n + other.n,
                       self.expected + other.expected, self.observed + other.observed)

    def to_dict(self) -> dict:
        return {"group": self.group, "n": self.n, "expected": self.expected,
                "observed": self.observed, "ratio": self.ratio}


def _check(probs, labels):
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise InputError("probabilities and labels must be 1-d and the same length")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise InputError("probabilities must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be binary 0/1")
    return p, y.astype(int)


def expected_observed(probs, labels, group: str = "overall") -> EoEntry:
    p, y = _check(probs, labels)
    return EoEntry(group, int(p.size), float(np.sum(p)), int(np.sum(y)))


def balanced_partition(n: int, k: int) -> list[int]:
    """Group sizes for ``n`` items in ``k`` contiguous groups.

    Sizes differ by at most one; the extra items go to the outermost groups
    first (first, last, second, second-to-last, ...), so any smaller groups
    sit in the middle.
    """
    if k < 1:
        raise InputError("need at least one group")
    if n < k:
        raise TooFewSubjects(f"cannot split {n} subjects into {k} groups")
    base, rem = divmod(n, k)
    sizes = [base] * k
    order = []
    lo, hi = 0, k - 1
    while lo <= hi:
        order.append(lo)
        if hi != lo:
            order.append(hi)
        lo, hi = lo + 1, hi - 1
    for i in order[:rem]:
        sizes[i] += 1
    return sizes


def _sorted_groups(probs, k):
    order = np.argsort(probs, kind="stable")
    sizes = balanced_partition(len(probs), k)
    bounds = np.cumsum([0] + sizes)
    return [order[bounds[i]:bounds[i + 1]] for i in range(k)]


def risk_quantile_groups(probs, labels, k: int = 5) -> list[EoEntry]:
    p, y = _check(probs, labels)
    return [
        EoEntry(f"Group {i + 1}", int(idx.size), float(np.sum(p[idx])), int(np.sum(y[idx])))
        for i, idx in enumerate(_sorted_groups(p, k))
    ]


def median_split(values) -> tuple[np.ndarray, np.ndarray, float]:
    """Boolean masks (below-or-equal, above) around the sample median."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.any(np.isnan(v)):
        raise InputError("median split needs a complete, non-empty feature")
    med = float(np.median(v))
    below = v <= med
    return below, ~below, med


def median_split_eo(values, probs, labels) -> tuple[EoEntry, EoEntry]:
    p, y = _check(probs, labels)
    below, above, _ = median_split(values)
    if below.size != p.size:
        raise InputError("feature length differs from probabilities")
    return (
        EoEntry("Below median", int(below.sum()), float(np.sum(p[below])), int(np.sum(y[below]))),
        EoEntry("Above median", int(above.sum()), float(np.sum(p[above])), int(np.sum(y[above]))),
    )


def sex_eo(sex, probs, labels) -> tuple[EoEntry, EoEntry]:
    p, y = _check(probs, labels)
    s = np.asarray(sex)
    male = s == 1
    return (
        EoEntry("Male", int(male.sum()), float(np.sum(p[male])), int(np.sum(y[male]))),
        EoEntry("Female", int((~male).sum()), float(np.sum(p[~male])), int(np.sum(y[~male]))),
    )


@dataclass(frozen=True)
class CalibrationBin:
    mean_pred: float
    event_rate: float
    count: int


@dataclass(frozen=True)
class HistogramBin:
    outcome: int
    low: float
    high: float
    count: int


@dataclass(frozen=True)
class CalibrationCurveData:
    bins: tuple[CalibrationBin, ...]
    histogram: tuple[HistogramBin, ...]


def calibration_curve(probs, labels, n_bins: int = 10) -> CalibrationCurveData:
    """Equal-count bins over sorted predicted probabilities, plus per-outcome
    histograms of the predictions on 20 equal-width bins of [0, 1]."""
    p, y = _check(probs, labels)
    if p.size < n_bins:
        raise TooFewSubjects(f"{p.size} subjects is fewer than {n_bins} bins")
    bins = tuple(
        CalibrationBin(float(np.mean(p[idx])), float(np.mean(y[idx])), int(idx.size))
        for idx in _sorted_groups(p, n_bins)
    )
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    hist = []
    for outcome in (0, 1):
        counts, _ = np.histogram(p[y == outcome], bins=edges)
        hist.extend(HistogramBin(outcome, float(edges[i]), float(edges[i + 1]), int(c))
                    for i, c in enumerate(counts))
    return CalibrationCurveData(bins, tuple(hist))


@dataclass(frozen=True)
class Recalibration:
    model: ModelSpec
    fit: CalibrationFit
    before: EoEntry
    after: EoEntry

    def to_dict(self) -> dict:
        return {
            "calibration_intercept": self.fit.intercept,
            "calibration_slope": self.fit.slope,
            "converged": self.fit.converged,
            "iterations": self.fit.iterations,
            "intercept_before": self.model.intercept - self.fit.intercept,
            "intercept_after": self.model.intercept,
            "eo_before": self.before.to_dict(),
            "eo_after": self.after.to_dict(),
        }


def recalibrate(model: ModelSpec, cohort) -> Recalibration:
    """Shift the model intercept by the cohort's calibration intercept."""
    y = cohort.labels
    if y.sum() == 0 or y.sum() == y.size:
        raise DegenerateLabels("recalibration needs at least one case and one control")
    lp = cohort.linear_predictors(model)
    # a constant lp leaves the slope unidentifiable; the intercept is still fine
    fit = calibration_fit(y, lp) if np.ptp(lp) > 0 else calibration_intercept_fit(y, lp)
    updated = update_intercept(model, fit.intercept)
    before = expected_observed(predict_probability(lp), y)
    after = expected_observed(cohort.probabilities(updated), y)
    return Recalibration(updated, fit, before, after)


def subgroup_tables(cohort, probs, quantiles: int = 5,
                    median_predictors: Sequence[str] = ()) -> list[tuple[str, list[EoEntry]]]:
    """Tables of E/O by risk quantile, sex and median split of each predictor."""
    y = cohort.labels
    tables = [("Risk quantile groups", risk_quantile_groups(probs, y, quantiles)),
              ("Biological sex", list(sex_eo(cohort.sex, probs, y)))]
    for name in median_predictors:
        tables.append((name, list(median_split_eo(cohort.feature(name), probs, y))))
    return tables
