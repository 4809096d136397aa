"""Validation report assembly and file emission.

Every real in a report is stored already rounded to 6 significant digits,
so a report survives a JSON round trip unchanged. E/O table ratios are
further rounded to 3 decimals, computed from the rounded expected count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from .calibration import (
    CalibrationCurveData,
    EoEntry,
    calibration_curve,
    expected_observed,
    subgroup_tables,
)
from .discrimination import RocCurve, delong_ci, roc_curve
from .errors import DegenerateLabels, InvariantViolation
from .glm import calibration_fit
from .model_core import MedianCutoffs, ModelSpec, count_score, predict_probability


def sig6(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return x
    return float(f"{x:.6g}")


def fmt6(x) -> str:
    if x is None:
        return "NA"
    return f"{float(x):.6g}"


def eo_row(entry: EoEntry) -> dict:
    expected = sig6(entry.expected)
    ratio = None if entry.observed == 0 else round(expected / entry.observed, 3)
    return {"group": entry.group, "n": entry.n, "expected": expected,
            "observed": entry.observed, "ratio": ratio}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ValidationReport:
    tool_version: str
    model_provenance: str
    inputs: dict
    cohort: dict
    auc: dict
    overall: dict
    calibration: dict
    quantile_table: list
    sex_table: list
    median_tables: dict
    variance_components: dict
    count_score: Optional[dict] = None
    recalibration: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ValidationReport":
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ValidationReport":
        return cls.from_dict(json.loads(text))


@dataclass
class ValidationArtifacts:
    report: ValidationReport
    roc: RocCurve
    curve: CalibrationCurveData
    eo_rows: list = field(default_factory=list)
    probabilities: Optional[np.ndarray] = None
    calibration_line: Optional[tuple] = None


def _check_totals(overall: EoEntry, parts: list[EoEntry], label: str) -> None:
    n = sum(e.n for e in parts)
    o = sum(e.observed for e in parts)
    e = math.fsum(x.expected for x in parts)
    if n != overall.n or o != overall.observed or not math.isclose(e, overall.expected, rel_tol=1e-9, abs_tol=1e-9):
        raise InvariantViolation(f"{label} totals do not match the overall E/O entry")


def build_validation(model: ModelSpec, cohort, *, quantiles: int = 5, bins: int = 10,
                     cutoffs: Optional[MedianCutoffs] = None, inputs: Optional[dict] = None,
                     exclusions=()) -> ValidationArtifacts:
    y = cohort.labels
    if cohort.case_count == 0:
        raise DegenerateLabels("cohort has no cases (outcome = 1); discrimination and E/O are undefined")
    if cohort.case_count == cohort.n:
        raise DegenerateLabels("cohort has no controls (outcome = 0); discrimination is undefined")

    lp = cohort.linear_predictors(model)
    probs = predict_probability(lp)
    est = delong_ci(probs, y)
    overall = expected_observed(probs, y)
    fit = calibration_fit(y, lp)

    continuous = model.continuous_predictors
    tables = subgroup_tables(cohort, probs, quantiles, continuous)
    for label, parts in tables:
        _check_totals(overall, parts, label)
    quantile_table = [eo_row(e) for e in tables[0][1]]
    sex_table = [eo_row(e) for e in tables[1][1]]
    median_tables = {label: [eo_row(e) for e in parts] for label, parts in tables[2:]}

    cs = None
    if cutoffs is None:
        cutoffs = MedianCutoffs.from_features(model, cohort.feature_table(continuous))
        cutoff_source = "validation cohort medians"
    else:
        cutoff_source = "supplied"
    scores = np.array([count_score(s.features, cutoffs, s.sex) for s in cohort.subjects])
    if cohort.n >= 4 and min(cohort.case_count, cohort.n - cohort.case_count) >= 2:
        cs_est = delong_ci(scores, y)
        cs = {"auc": sig6(cs_est.auc), "ci_low": sig6(cs_est.ci_low), "ci_high": sig6(cs_est.ci_high),
              "cutoff_source": cutoff_source,
              "cutoffs": {k: sig6(v) for k, v in cutoffs.cutoffs.items()},
              "reverse_coded": sorted(cutoffs.reverse_coded)}

    report = ValidationReport(
        tool_version=__version__,
        model_provenance=model.provenance,
        inputs=dict(inputs or {}),
        cohort={"n": cohort.n, "cases": cohort.case_count, "controls": cohort.n - cohort.case_count,
                "prevalence": sig6(cohort.prevalence), "prevalence_percent": round(100 * cohort.prevalence, 2),
                "excluded": [{"subject_id": e.subject_id, "missing": list(e.missing)} for e in exclusions]},
        auc={"auc": sig6(est.auc), "ci_low": sig6(est.ci_low), "ci_high": sig6(est.ci_high),
             "level": est.level, "method": "DeLong", "n_cases": est.n_cases, "n_controls": est.n_controls,
             "zero_variance": est.zero_variance},
        overall={"n": overall.n, "expected": sig6(overall.expected), "observed": overall.observed,
                 "ratio": sig6(overall.ratio)},
        calibration={"intercept": sig6(fit.intercept), "slope": sig6(fit.slope),
                     "line_intercept": sig6(fit.line_intercept), "converged": fit.converged,
                     "iterations": fit.iterations},
        quantile_table=quantile_table,
        sex_table=sex_table,
        median_tables=median_tables,
        variance_components={
            name: {"mu": sig6(vc.mu), "tau2": sig6(vc.tau2), "sigma2": sig6(vc.sigma2), "method": vc.method,
                   "estimated_on": "validation cohort"}
            for name, vc in sorted(cohort.variance_components.items())
        },
        count_score=cs,
    )
    eo_rows = [dict(eo_row(overall), group="overall")]
    eo_rows += [dict(r, group=f"quantile/{r['group']}") for r in quantile_table]
    eo_rows += [dict(r, group=f"sex/{r['group']}") for r in sex_table]
    for label, rows in median_tables.items():
        eo_rows += [dict(r, group=f"{label}/{r['group']}") for r in rows]
    line = None if fit.slope is None else (fit.line_intercept, fit.slope)
    return ValidationArtifacts(report, roc_curve(probs, y), calibration_curve(probs, y, bins), eo_rows,
                               probs, line)


# ---------------------------------------------------------------------------
# writers


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def eo_table_csv(rows) -> str:
    return _csv(["group", "n", "expected", "observed", "ratio"],
                [[r["group"], r["n"], fmt6(r["expected"]), r["observed"],
                  "NA" if r["ratio"] is None else f"{r['ratio']:.3f}"] for r in rows])


def roc_csv(roc: RocCurve) -> str:
    return _csv(["threshold", "fpr", "tpr"],
                [[fmt6(t), fmt6(f), fmt6(p)] for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr)])


def calibration_curve_csv(curve: CalibrationCurveData) -> str:
    return _csv(["bin", "mean_pred", "event_rate", "count"],
                [[i + 1, fmt6(b.mean_pred), fmt6(b.event_rate), b.count] for i, b in enumerate(curve.bins)])


def histogram_csv(curve: CalibrationCurveData) -> str:
    return _csv(["outcome", "bin_low", "bin_high", "count"],
                [[h.outcome, fmt6(h.low), fmt6(h.high), h.count] for h in curve.histogram])


def calibration_svg(curve: CalibrationCurveData, line: Optional[tuple] = None, lp_range=None,
                    title: str = "Calibration") -> str:
    """Static calibration plot: decile triangles, identity line, optional
    logistic calibration line, and per-outcome histogram strips."""
    W, H, M = 420, 420, 50
    size = W - 2 * M

    def px(x):
        return M + x * size

    def py(y):
        return H - M - y * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{M}" y="{M}" width="{size}" height="{size}" fill="none" stroke="black"/>',
        f'<line x1="{px(0):.1f}" y1="{py(0):.1f}" x2="{px(1):.1f}" y2="{py(1):.1f}" stroke="red"/>',
    ]
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{px(t):.1f}" y="{H - M + 16}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{t:g}</text>')
        parts.append(f'<text x="{M - 6}" y="{py(t) + 3:.1f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{t:g}</text>')
    parts.append(f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">Predicted probability</text>')
    parts.append(f'<text x="14" y="{H / 2:.1f}" transform="rotate(-90 14 {H / 2:.1f})" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">Observed proportion</text>')

    if line is not None:
        a, b = line
        pts = []
        for i in range(101):
            p = 0.001 + 0.998 * i / 100
            lp = math.log(p / (1 - p))
            obs = 1.0 / (1.0 + math.exp(-(a + b * lp)))
            pts.append(f"{px(p):.1f},{py(obs):.1f}")
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="gray" stroke-dasharray="4 3"/>')

    # histogram strips: controls above the axis, cases below it
    counts = {0: [], 1: []}
    for h in curve.histogram:
        counts[h.outcome].append(h)
    peak = max([h.count for h in curve.histogram] + [1])
    strip = 30.0
    base = py(0)
    for outcome, sign in ((0, -1), (1, 1)):
        for h in counts[outcome]:
            if h.count == 0:
                continue
            height = strip * h.count / peak
            y0 = base - height if sign < 0 else base
            parts.append(f'<rect x="{px(h.low) + 1:.1f}" y="{y0:.1f}" width="{px(h.high) - px(h.low) - 2:.1f}" '
                         f'height="{height:.1f}" fill="{"steelblue" if outcome else "lightgray"}"/>')

    for b in curve.bins:
        x, y = px(b.mean_pred), py(b.event_rate)
        parts.append(f'<polygon points="{x:.1f},{y - 5:.1f} {x - 5:.1f},{y + 4:.1f} {x + 5:.1f},{y + 4:.1f}" '
                     f'fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_validation(art: ValidationArtifacts, out_dir) -> dict:
    out = Path(out_dir)
    files = {
        "report.json": art.report.to_json(),
        "eo_table.csv": eo_table_csv(art.eo_rows),
        "roc.csv": roc_csv(art.roc),
        "calibration_curve.csv": calibration_curve_csv(art.curve),
        "histogram.csv": histogram_csv(art.curve),
        "calibration.svg": calibration_svg(art.curve, art.calibration_line),
    }
    for name, text in files.items():
        atomic_write(out / name, text)
    return {name: out / name for name in files}
