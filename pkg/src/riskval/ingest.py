"""Cohort ingestion and predictor normalization.

Input is two CSV files: a cross-sectional ``cohort.csv`` (one row per
subject: subject_id, sex, outcome and raw predictor columns) and an
optional long-format ``longitudinal.csv`` (subject_id, predictor, wave,
age, value). A rules document says how each model predictor is derived
from those raw fields and mapped onto [0, 1].
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    AllMissing,
    InputError,
    NonPositiveDivisor,
    OutOfRange,
    ParseError,
    RuleGap,
    UnknownPredictor,
)
from .longitudinal import SubjectSeries, VarianceComponents, blup, estimate_variance_components, wave_mean
from .model_core import ModelSpec, linear_predictors, predict_probability

logger = logging.getLogger(__name__)

MINMAX_MODES = ("literal", "range")


# ---------------------------------------------------------------------------
# scalar normalization rules


def normalize_likert(value: int, max_category: int) -> float:
    if max_category <= 0:
        raise NonPositiveDivisor("max_category must be positive")
    if value != int(value) or not 1 <= value <= max_category:
        raise OutOfRange(f"Likert value {value} outside 1..{max_category}")
    return value / max_category


def normalize_divide(value: float, divisor: float, min_value: float = 0.0) -> float:
    if not divisor > 0:
        raise NonPositiveDivisor(f"divisor must be positive, got {divisor}")
    if not min_value <= value <= divisor:
        raise OutOfRange(f"value {value} outside [{min_value}, {divisor}]")
    return value / divisor


def normalize_min_max(score: float, min_possible: float, max_possible: float, mode: str = "literal") -> float:
    """Shift by the minimum possible score and rescale.

    ``literal`` divides by the maximum possible score, so a score at the
    maximum maps to (max - min) / max rather than 1. ``range`` divides by
    (max - min) and spans the full unit interval.
    """
    if mode not in MINMAX_MODES:
        raise InputError(f"unknown min-max mode {mode!r}")
    if not min_possible <= score <= max_possible:
        raise OutOfRange(f"score {score} outside [{min_possible}, {max_possible}]")
    if mode == "literal":
        if not max_possible > 0:
            raise NonPositiveDivisor("maximum possible score must be positive")
        out = (score - min_possible) / max_possible
    else:
        if not max_possible > min_possible:
            raise NonPositiveDivisor("maximum possible score must exceed the minimum")
        out = (score - min_possible) / (max_possible - min_possible)
    if not 0.0 <= out <= 1.0:
        raise OutOfRange(f"normalized score {out} outside [0, 1]")
    return out


def item_mean_score(responses: Iterable[Optional[float]], divisor: float) -> float:
    """Mean of the non-missing responses, divided by ``divisor``."""
    if not divisor > 0:
        raise NonPositiveDivisor("divisor must be positive")
    present = [float(r) for r in responses if r is not None and not _isnan(r)]
    if not present:
        raise AllMissing("all item responses are missing")
    for r in present:
        if not 0 <= r <= divisor:
            raise OutOfRange(f"item response {r} outside [0, {divisor}]")
    return math.fsum(present) / len(present) / divisor


def delinquency_score(responses: Iterable[Optional[int]]) -> float:
    return item_mean_score(responses, 3)


def ace_score(events: Iterable[Optional[int]]) -> float:
    present = [e for e in events if e is not None and not _isnan(e)]
    if not present:
        raise AllMissing("all adverse-experience items are missing")
    for e in present:
        if e not in (0, 1):
            raise OutOfRange(f"event indicator {e} is not 0/1")
    return sum(present) / len(present)


def compose_any_source(observations: Sequence[tuple], cutoff: float) -> Optional[int]:
    """1 if any source reports the event before ``cutoff`` years of age.

    Returns None when there is no evidence at all.
    """
    if not observations:
        return None
    hit = 0
    for _source, occurred, age in observations:
        if age is not None and age < 0:
            raise OutOfRange(f"negative age {age}")
        if occurred == 1 and age is not None and age < cutoff:
            hit = 1
    return hit


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


# ---------------------------------------------------------------------------
# raw records


@dataclass(frozen=True)
class Observation:
    predictor: str
    wave: int
    age: Optional[float]
    value: float


@dataclass
class RawRecord:
    subject_id: str
    sex: int
    outcome: int
    fields: dict = field(default_factory=dict)
    observations: list = field(default_factory=list)
    line: int = 0

    def observations_for(self, name: str) -> list[Observation]:
        return sorted((o for o in self.observations if o.predictor == name), key=lambda o: o.wave)


# ---------------------------------------------------------------------------
# rule set


@dataclass(frozen=True)
class Rule:
    """A predictor derivation. ``apply`` returns a float for cross-sectional
    predictors; ``series`` returns (wave, age, value) triples for
    longitudinal ones. Missing input yields None / an empty list."""

    variant = ""

    def inputs(self, predictor: str) -> set[str]:
        return {predictor}

    def apply(self, predictor: str, rec: RawRecord) -> Optional[float]:
        raise InputError(f"rule {self.variant!r} cannot derive a cross-sectional value")

    def series(self, predictor: str, rec: RawRecord) -> list[tuple[int, Optional[float], float]]:
        raise InputError(f"rule {self.variant!r} cannot derive a longitudinal series")


@dataclass(frozen=True)
class Passthrough(Rule):
    column: Optional[str] = None
    variant = "passthrough"

    def inputs(self, predictor):
        return {self.column or predictor}

    def apply(self, predictor, rec):
        return rec.fields.get(self.column or predictor)

    def series(self, predictor, rec):
        return [(o.wave, o.age, o.value) for o in rec.observations_for(self.column or predictor)]


@dataclass(frozen=True)
class DivideByConstant(Rule):
    divisor: float = 1.0
    column: Optional[str] = None
    likert: bool = False
    variant = "divide_by_constant"

    def __post_init__(self):
        if not self.divisor > 0:
            raise NonPositiveDivisor("divide_by_constant needs a positive divisor")

    def inputs(self, predictor):
        return {self.column or predictor}

    def _norm(self, v):
        if self.likert:
            return normalize_likert(v, int(self.divisor))
        return normalize_divide(v, self.divisor)

    def apply(self, predictor, rec):
        v = rec.fields.get(self.column or predictor)
        return None if v is None else self._norm(v)

    def series(self, predictor, rec):
        return [(o.wave, o.age, self._norm(o.value)) for o in rec.observations_for(self.column or predictor)]


@dataclass(frozen=True)
class MinMaxPossible(Rule):
    min_possible: float = 0.0
    max_possible: float = 1.0
    mode: Optional[str] = None
    by_wave: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    column: Optional[str] = None
    variant = "min_max_possible"

    def __post_init__(self):
        if self.mode is not None and self.mode not in MINMAX_MODES:
            raise InputError(f"unknown min-max mode {self.mode!r}")

    def inputs(self, predictor):
        return {self.column or predictor}

    def with_default_mode(self, mode):
        if self.mode is not None:
            return self
        return MinMaxPossible(self.min_possible, self.max_possible, mode, self.by_wave, self.column)

    def apply(self, predictor, rec):
        v = rec.fields.get(self.column or predictor)
        if v is None:
            return None
        return normalize_min_max(v, self.min_possible, self.max_possible, self.mode or "literal")

    def series(self, predictor, rec):
        out = []
        for o in rec.observations_for(self.column or predictor):
            lo, hi = self.by_wave.get(o.wave, (self.min_possible, self.max_possible))
            out.append((o.wave, o.age, normalize_min_max(o.value, lo, hi, self.mode or "literal")))
        return out


@dataclass(frozen=True)
class ItemMeanThenDivide(Rule):
    """Mean of non-missing items divided by ``divisor``.

    Each entry of ``items`` is a list of raw item names answering the same
    question; the largest non-missing response among them is used.
    """

    items: tuple[tuple[str, ...], ...] = ()
    divisor: float = 3.0
    variant = "item_mean_then_divide"

    def inputs(self, predictor):
        return {name for group in self.items for name in group}

    @staticmethod
    def _collapse(values):
        present = [v for v in values if v is not None]
        return max(present) if present else None

    def apply(self, predictor, rec):
        responses = [self._collapse([rec.fields.get(n) for n in group]) for group in self.items]
        if all(r is None for r in responses):
            return None
        return item_mean_score(responses, self.divisor)

    def series(self, predictor, rec):
        by_wave: dict[int, dict[str, Observation]] = defaultdict(dict)
        for group in self.items:
            for name in group:
                for o in rec.observations_for(name):
                    by_wave[o.wave][name] = o
        out = []
        for wave in sorted(by_wave):
            obs = by_wave[wave]
            responses = [self._collapse([obs[n].value if n in obs else None for n in group]) for group in self.items]
            if all(r is None for r in responses):
                continue
            ages = [o.age for o in obs.values() if o.age is not None]
            out.append((wave, min(ages) if ages else None, item_mean_score(responses, self.divisor)))
        return out


@dataclass(frozen=True)
class EventSpec:
    name: str
    sources: tuple[str, ...]


def _event_value(ev: EventSpec, rec: RawRecord, cutoff: float) -> Optional[int]:
    # Dated observations from any source (any wave) take precedence over a
    # pre-computed indicator column named after the event.
    obs = [(o.predictor, int(o.value), o.age) for s in ev.sources for o in rec.observations_for(s)]
    if obs:
        return compose_any_source(obs, cutoff)
    v = rec.fields.get(ev.name)
    if v is None:
        return None
    if v not in (0, 1):
        raise OutOfRange(f"event {ev.name!r} indicator {v} is not 0/1")
    return int(v)


@dataclass(frozen=True)
class NonmissingEventMean(Rule):
    events: tuple[EventSpec, ...] = ()
    age_cutoff: float = 18.0
    variant = "nonmissing_event_mean"

    def __post_init__(self):
        if not self.age_cutoff > 0:
            raise InputError("age_cutoff must be positive")

    def inputs(self, predictor):
        return {e.name for e in self.events} | {s for e in self.events for s in e.sources}

    def apply(self, predictor, rec):
        values = [_event_value(e, rec, self.age_cutoff) for e in self.events]
        if all(v is None for v in values):
            return None
        return ace_score(values)


@dataclass(frozen=True)
class AnySourceOr(Rule):
    sources: tuple[str, ...] = ()
    age_cutoff: float = 18.0
    variant = "any_source_or"

    def __post_init__(self):
        if not self.age_cutoff > 0:
            raise InputError("age_cutoff must be positive")

    def inputs(self, predictor):
        return {predictor} | set(self.sources)

    def apply(self, predictor, rec):
        v = _event_value(EventSpec(predictor, self.sources), rec, self.age_cutoff)
        return None if v is None else float(v)


_VARIANTS = {
    "passthrough": Passthrough,
    "divide_by_constant": DivideByConstant,
    "min_max_possible": MinMaxPossible,
    "item_mean_then_divide": ItemMeanThenDivide,
    "nonmissing_event_mean": NonmissingEventMean,
    "any_source_or": AnySourceOr,
}


def _rule_from_dict(predictor: str, doc: Mapping) -> Rule:
    if not isinstance(doc, Mapping) or "variant" not in doc:
        raise InputError(f"rule for {predictor!r} must be an object with a 'variant'")
    params = dict(doc)
    variant = params.pop("variant")
    if variant not in _VARIANTS:
        raise InputError(f"rule for {predictor!r}: unknown variant {variant!r}")
    try:
        if variant == "item_mean_then_divide":
            params["items"] = tuple(
                (g,) if isinstance(g, str) else tuple(g) for g in params.get("items", ())
            )
            if not params["items"]:
                raise InputError(f"rule for {predictor!r}: empty item list")
        elif variant == "nonmissing_event_mean":
            events = []
            for e in params.get("events", ()):
                if isinstance(e, str):
                    events.append(EventSpec(e, (e,)))
                else:
                    events.append(EventSpec(e["name"], tuple(e.get("sources", (e["name"],)))))
            if not events:
                raise InputError(f"rule for {predictor!r}: empty event list")
            params["events"] = tuple(events)
        elif variant == "any_source_or":
            params["sources"] = tuple(params.get("sources", (predictor,)))
        elif variant == "min_max_possible" and "by_wave" in params:
            params["by_wave"] = {int(k): (float(v[0]), float(v[1])) for k, v in params["by_wave"].items()}
        return _VARIANTS[variant](**params)
    except TypeError as exc:
        raise InputError(f"rule for {predictor!r}: {exc}") from None


def parse_rules(doc: Mapping) -> dict[str, Rule]:
    if not isinstance(doc, Mapping):
        raise InputError("rules document must be an object")
    return {name: _rule_from_dict(name, spec) for name, spec in doc.items()}


def load_rules(path) -> dict[str, Rule]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    return parse_rules(doc)


def check_rules(model: ModelSpec, rules: Mapping[str, Rule]) -> None:
    for name in rules:
        if name not in model.names:
            raise UnknownPredictor(f"rules mention {name!r}, which the model does not use")
    for name in model.names:
        if name not in rules:
            raise RuleGap(name)


# ---------------------------------------------------------------------------
# CSV parsing


def _parse_float(text, path, line, column) -> Optional[float]:
    text = text.strip()
    if text == "" or text.upper() == "NA":
        return None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: not a number: {text!r}", path, line) from None
    if not math.isfinite(v):
        raise ParseError(f"column {column!r}: non-finite value", path, line)
    return v


def _parse_binary(text, path, line, column) -> int:
    v = _parse_float(text, path, line, column)
    if v not in (0.0, 1.0):
        raise ParseError(f"column {column!r} must be 0 or 1, got {text!r}", path, line)
    return int(v)


def read_cohort_csv(path) -> dict[str, RawRecord]:
    path = Path(path)
    records: dict[str, RawRecord] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", path, 1) from None
        for req in ("subject_id", "sex", "outcome"):
            if req not in header:
                raise ParseError(f"missing required column {req!r}", path, 1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names", path, 1)
        for row in reader:
            line = reader.line_num
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, line)
            cells = dict(zip(header, row))
            sid = cells["subject_id"].strip()
            if not sid:
                raise ParseError("empty subject_id", path, line)
            if sid in records:
                raise ParseError(f"duplicate subject_id {sid!r}", path, line)
            fields = {
                k: _parse_float(v, path, line, k)
                for k, v in cells.items()
                if k not in ("subject_id", "sex", "outcome")
            }
            sex = _parse_binary(cells["sex"], path, line, "sex")
            fields["sex"] = float(sex)
            records[sid] = RawRecord(
                subject_id=sid,
                sex=sex,
                outcome=_parse_binary(cells["outcome"], path, line, "outcome"),
                fields=fields,
                line=line,
            )
    return records


def read_longitudinal_csv(path, records: Mapping[str, RawRecord]) -> None:
    """Attach long-format observations to ``records`` in place."""
    path = Path(path)
    seen = set()
    cols = ("subject_id", "predictor", "wave", "age", "value")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", path, 1) from None
        missing = [c for c in cols if c not in header]
        if missing:
            raise ParseError(f"missing required column(s) {missing}", path, 1)
        idx = {c: header.index(c) for c in cols}
        for row in reader:
            line = reader.line_num
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, line)
            sid = row[idx["subject_id"]].strip()
            pred = row[idx["predictor"]].strip()
            wave = _parse_float(row[idx["wave"]], path, line, "wave")
            if wave is None or wave != int(wave):
                raise ParseError("wave must be an integer", path, line)
            wave = int(wave)
            age = _parse_float(row[idx["age"]], path, line, "age")
            value = _parse_float(row[idx["value"]], path, line, "value")
            if value is None:
                continue
            key = (sid, pred, wave)
            if key in seen:
                raise ParseError(f"duplicate wave {wave} for subject {sid!r}, predictor {pred!r}", path, line)
            seen.add(key)
            if sid not in records:
                logger.warning("%s:%d: subject %r not in cohort file; row ignored", path, line, sid)
                continue
            records[sid].observations.append(Observation(pred, wave, age, value))


# ---------------------------------------------------------------------------
# cohort


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    sex: int
    outcome: int
    features: Mapping[str, float]
    series: Mapping[str, SubjectSeries] = field(default_factory=dict)


@dataclass(frozen=True)
class Exclusion:
    subject_id: str
    missing: tuple[str, ...]


@dataclass(frozen=True)
class Cohort:
    subjects: tuple[SubjectRecord, ...]
    variance_components: Mapping[str, VarianceComponents] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def case_count(self) -> int:
        return sum(s.outcome for s in self.subjects)

    @property
    def prevalence(self) -> float:
        return self.case_count / self.n if self.n else float("nan")

    @property
    def ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.outcome for s in self.subjects], dtype=int)

    @property
    def sex(self) -> np.ndarray:
        return np.array([s.sex for s in self.subjects], dtype=int)

    def feature(self, name: str) -> np.ndarray:
        return np.array([s.features[name] for s in self.subjects], dtype=float)

    def feature_table(self, names: Iterable[str]) -> dict[str, np.ndarray]:
        return {name: self.feature(name) for name in names}

    def linear_predictors(self, model: ModelSpec) -> np.ndarray:
        return linear_predictors(model, self.feature_table(model.names))

    def probabilities(self, model: ModelSpec) -> np.ndarray:
        return predict_probability(self.linear_predictors(model))

    def subset(self, ids: Iterable[str]) -> "Cohort":
        by_id = {s.subject_id: s for s in self.subjects}
        return Cohort(tuple(by_id[i] for i in ids), self.variance_components)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "case_count": self.case_count,
            "variance_components": {k: v.to_dict() for k, v in sorted(self.variance_components.items())},
            "subjects": [
                {
                    "subject_id": s.subject_id,
                    "sex": s.sex,
                    "outcome": s.outcome,
                    "features": dict(s.features),
                    "series": {k: list(v.values) for k, v in s.series.items()},
                }
                for s in self.subjects
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _range_check(model: ModelSpec, name: str, value: float, sid: str) -> None:
    spec = model.predictor(name)
    if spec.summarizer == "random_intercept":
        return
    if spec.range == "binary" and value not in (0.0, 1.0):
        raise OutOfRange(f"subject {sid}: {name}={value} is not binary")
    if spec.range == "unit_interval" and not 0.0 <= value <= 1.0:
        raise OutOfRange(f"subject {sid}: {name}={value} outside [0, 1]")


def build_cohort(records: Mapping[str, RawRecord], model: ModelSpec, rules: Mapping[str, Rule],
                 vc_method: str = "moments", minmax_mode: str = "literal") -> tuple[Cohort, list[Exclusion]]:
    """Normalize, summarize and complete-case filter raw records."""
    check_rules(model, rules)
    rules = {k: (r.with_default_mode(minmax_mode) if isinstance(r, MinMaxPossible) else r) for k, r in rules.items()}

    derived = []
    exclusions = []
    for sid, rec in records.items():
        values: dict[str, float] = {}
        series: dict[str, SubjectSeries] = {}
        missing = []
        for spec in model.predictors:
            rule = rules[spec.name]
            try:
                if spec.kind == "cross_sectional":
                    v = rule.apply(spec.name, rec)
                    if v is None:
                        missing.append(spec.name)
                    else:
                        _range_check(model, spec.name, v, sid)
                        values[spec.name] = float(v)
                else:
                    triples = rule.series(spec.name, rec)
                    if not triples:
                        missing.append(spec.name)
                    else:
                        s = SubjectSeries(sid, tuple(t[2] for t in triples),
                                          tuple(t[0] for t in triples),
                                          tuple(t[1] for t in triples))
                        for v in s.values:
                            if spec.range == "unit_interval" and not 0.0 <= v <= 1.0:
                                raise OutOfRange(f"subject {sid}: {spec.name} wave value {v} outside [0, 1]")
                        series[spec.name] = s
            except AllMissing:
                missing.append(spec.name)
            except (OutOfRange, NonPositiveDivisor) as exc:
                raise type(exc)(f"cohort line {rec.line}, predictor {spec.name}: {exc}") from None
        if missing:
            exclusions.append(Exclusion(sid, tuple(missing)))
        else:
            derived.append((rec, values, series))

    vcs = {}
    for spec in model.predictors:
        if spec.summarizer == "random_intercept":
            vcs[spec.name] = estimate_variance_components([d[2][spec.name] for d in derived], vc_method)

    subjects = []
    for rec, values, series in derived:
        feats = {}
        for spec in model.predictors:
            if spec.summarizer == "identity":
                feats[spec.name] = values[spec.name]
            elif spec.summarizer == "wave_mean":
                feats[spec.name] = wave_mean(series[spec.name])
            else:
                feats[spec.name] = blup(series[spec.name], vcs[spec.name])
        subjects.append(SubjectRecord(rec.subject_id, rec.sex, rec.outcome, feats, series))

    exclusions.sort(key=lambda e: e.subject_id)
    for e in exclusions:
        logger.info("excluded subject %s: missing %s", e.subject_id, ", ".join(e.missing))
    return Cohort(tuple(subjects), vcs), exclusions


def load_cohort(cohort_path, model: ModelSpec, rules: Mapping[str, Rule] | str | Path,
                longitudinal_path=None, vc_method: str = "moments",
                minmax_mode: str = "literal") -> tuple[Cohort, list[Exclusion]]:
    if isinstance(rules, (str, Path)):
        rules = load_rules(rules)
    check_rules(model, rules)
    records = read_cohort_csv(cohort_path)
    if longitudinal_path is not None:
        read_longitudinal_csv(longitudinal_path, records)
    known = set()
    for name, rule in rules.items():
        known |= rule.inputs(name)
    for rec in records.values():
        for o in rec.observations:
            if o.predictor not in known:
                raise UnknownPredictor(f"longitudinal file references unknown predictor {o.predictor!r}")
    return build_cohort(records, model, rules, vc_method=vc_method, minmax_mode=minmax_mode)
