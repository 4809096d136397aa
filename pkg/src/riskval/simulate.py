"""Synthetic cohorts with known ground truth.

Outcomes are drawn from the model itself (after an optional intercept
shift), so every downstream statistic has a known target. Longitudinal
predictors are generated from the one-way random-intercept model and then
summarized exactly as :mod:`riskval.ingest` would summarize them.

Normal variates come from numpy's PCG64 generator (``standard_normal``,
ziggurat method). Regenerated cohorts match other implementations at the
statistical level only; committed fixtures are the bitwise reference.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import InputError
from .ingest import Cohort, SubjectRecord
from .longitudinal import SubjectSeries, blup, estimate_variance_components, wave_mean
from .model_core import ModelSpec, linear_predictors, model_from_dict, predict_probability


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class Bernoulli:
    p: float = 0.5


@dataclass(frozen=True)
class Longitudinal:
    mu: float
    tau2: float
    sigma2: float
    waves: int = 5
    min_waves: Optional[int] = None
    clamp: bool = False
    first_age: float = 11.0

    def __post_init__(self):
        if self.tau2 < 0 or self.sigma2 < 0:
            raise InputError("variances must be non-negative")
        if self.waves < 1:
            raise InputError("waves must be at least 1")
        if self.min_waves is not None and not 1 <= self.min_waves <= self.waves:
            raise InputError("min_waves must lie in 1..waves")


Generator = Union[Uniform, Bernoulli, Longitudinal]


@dataclass(frozen=True)
class SimConfig:
    model: ModelSpec
    n: int
    generators: Mapping[str, Generator]
    intercept_shift: float = 0.0
    seed: int = 0
    target_prevalence: Optional[float] = None
    sex_predictor: Optional[str] = None
    vc_method: str = "moments"

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be at least 1")
        missing = [p for p in self.model.names if p not in self.generators]
        if missing:
            raise InputError(f"no generator for predictors {missing}")
        if self.target_prevalence is not None:
            if not 0 < self.target_prevalence < 1:
                raise InputError("target prevalence must lie in (0, 1)")
            if self.intercept_shift != 0:
                raise InputError("give either intercept_shift or target_prevalence, not both")
        for spec in self.model.predictors:
            gen = self.generators[spec.name]
            if spec.kind == "longitudinal" and not isinstance(gen, Longitudinal):
                raise InputError(f"{spec.name}: longitudinal predictor needs a Longitudinal generator")
            if spec.kind == "cross_sectional" and isinstance(gen, Longitudinal):
                raise InputError(f"{spec.name}: cross-sectional predictor cannot use a Longitudinal generator")
            if spec.range == "binary" and not isinstance(gen, Bernoulli):
                raise InputError(f"{spec.name}: binary predictor needs a Bernoulli generator")


@dataclass(frozen=True)
class SimTruth:
    intercept_shift: float
    linear_predictor: np.ndarray
    probability: np.ndarray
    random_intercepts: Mapping[str, np.ndarray] = field(default_factory=dict)


def generate_longitudinal(mu, tau2, sigma2, n_subjects, waves, rng, clamp=False,
                          min_waves=None, first_age=11.0, id_prefix="S"):
    """Series from y_ij = mu + b_i + e_ij; returns (series list, true b)."""
    rng = np.random.default_rng(rng)
    b = rng.standard_normal(n_subjects) * np.sqrt(tau2)
    out = []
    for i in range(n_subjects):
        k = waves if min_waves is None else int(rng.integers(min_waves, waves + 1))
        wave_idx = np.arange(waves) if k == waves else np.sort(rng.choice(waves, size=k, replace=False))
        vals = mu + b[i] + rng.standard_normal(k) * np.sqrt(sigma2)
        if clamp:
            vals = np.clip(vals, 0.0, 1.0)
        out.append(SubjectSeries(
            f"{id_prefix}{i + 1:05d}",
            tuple(float(v) for v in vals),
            tuple(int(w) + 1 for w in wave_idx),
            tuple(first_age + int(w) for w in wave_idx),
        ))
    return out, b


def _resolve_sex_predictor(config: SimConfig) -> Optional[str]:
    if config.sex_predictor is not None:
        return config.sex_predictor
    for name in ("male", "sex"):
        if name in config.model.binary_predictors:
            return name
    return None


def generate_cohort(config: SimConfig) -> tuple[Cohort, SimTruth]:
    rng = np.random.default_rng(config.seed)
    n = config.n
    model = config.model
    ids = [f"S{i + 1:05d}" for i in range(n)]
    features: dict[str, np.ndarray] = {}
    series: dict[str, list[SubjectSeries]] = {}
    truth_b = {}
    vcs = {}
    for spec in model.predictors:
        gen = config.generators[spec.name]
        if isinstance(gen, Uniform):
            features[spec.name] = rng.uniform(gen.low, gen.high, n)
        elif isinstance(gen, Bernoulli):
            features[spec.name] = (rng.random(n) < gen.p).astype(float)
        else:
            s, b = generate_longitudinal(gen.mu, gen.tau2, gen.sigma2, n, gen.waves, rng,
                                         clamp=gen.clamp, min_waves=gen.min_waves,
                                         first_age=gen.first_age)
            series[spec.name] = s
            truth_b[spec.name] = b
            if spec.summarizer == "wave_mean":
                features[spec.name] = np.array([wave_mean(x) for x in s])
            else:
                vc = estimate_variance_components(s, config.vc_method)
                vcs[spec.name] = vc
                features[spec.name] = np.array([blup(x, vc) for x in s])

    sex_name = _resolve_sex_predictor(config)
    sex = features[sex_name].astype(int) if sex_name else (rng.random(n) < 0.5).astype(int)

    # intercept_shift is the model's miscalibration: the model intercept sits
    # `shift` away from the true one, so the true lp is base_lp - shift and an
    # ideal recalibration recovers -shift.
    base_lp = linear_predictors(model, features)
    shift = config.intercept_shift
    if config.target_prevalence is not None:
        target = config.target_prevalence
        shift = -brentq(lambda s: float(np.mean(predict_probability(base_lp + s))) - target, -30.0, 30.0,
                        xtol=1e-12)
    lp = base_lp - shift
    prob = predict_probability(lp)
    y = (rng.random(n) < prob).astype(int)

    subjects = tuple(
        SubjectRecord(
            ids[i], int(sex[i]), int(y[i]),
            {name: float(features[name][i]) for name in model.names},
            {name: SubjectSeries(ids[i], s[i].values, s[i].waves, s[i].ages) for name, s in series.items()},
        )
        for i in range(n)
    )
    truth = SimTruth(float(shift), lp, prob, truth_b)
    return Cohort(subjects, vcs), truth


# ---------------------------------------------------------------------------
# file emission


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def passthrough_rules(model: ModelSpec, sex_predictor: Optional[str]) -> dict:
    rules = {}
    for name in model.names:
        rules[name] = {"variant": "passthrough"}
        if name == sex_predictor:
            rules[name]["column"] = "sex"
    return rules


def write_cohort_files(cohort: Cohort, model: ModelSpec, out_dir, sex_predictor: Optional[str] = None) -> dict:
    """Write cohort.csv, longitudinal.csv and rules.json readable by ingest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cross = [p.name for p in model.predictors if p.kind == "cross_sectional" and p.name != sex_predictor]
    longi = [p.name for p in model.predictors if p.kind == "longitudinal"]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "sex", "outcome"] + cross)
    for s in cohort.subjects:
        w.writerow([s.subject_id, s.sex, s.outcome] + [repr(float(s.features[c])) for c in cross])
    _atomic_write(out / "cohort.csv", buf.getvalue())

    paths = {"cohort": out / "cohort.csv"}
    if longi:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject_id", "predictor", "wave", "age", "value"])
        for s in cohort.subjects:
            for name in longi:
                ser = s.series[name]
                for wave, age, v in zip(ser.waves, ser.ages, ser.values):
                    w.writerow([s.subject_id, name, wave, repr(float(age)), repr(float(v))])
        _atomic_write(out / "longitudinal.csv", buf.getvalue())
        paths["longitudinal"] = out / "longitudinal.csv"
    _atomic_write(out / "rules.json", json.dumps(passthrough_rules(model, sex_predictor), indent=2) + "\n")
    _atomic_write(out / "model.json", json.dumps(model.to_dict(), indent=2) + "\n")
    paths["rules"] = out / "rules.json"
    paths["model"] = out / "model.json"
    return paths


# ---------------------------------------------------------------------------
# demo configurations

# Synthetic coefficients for illustration only; not the published model.
DEMO_MODEL = {
    "intercept": -3.93,
    "coefficients": {
        "male": 0.65,
        "ace": 0.9,
        "neuroticism": 1.1,
        "conscientiousness": -1.4,
        "openness": 0.5,
        "delinquency": 3.5,
        "peer_cannabis_use": 2.5,
    },
    "predictors": [
        {"name": "male", "kind": "cross_sectional", "summarizer": "identity", "range": "binary"},
        {"name": "ace", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
        {"name": "neuroticism", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
        {"name": "conscientiousness", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
        {"name": "openness", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
        {"name": "delinquency", "kind": "longitudinal", "summarizer": "wave_mean", "range": "unit_interval"},
        {"name": "peer_cannabis_use", "kind": "longitudinal", "summarizer": "random_intercept", "range": "unit_interval"},
    ],
    "provenance": "synthetic demo model (illustrative coefficients, not fitted to any real cohort)",
}

DEMO_GENERATORS = {
    "mls_like": {
        "male": Bernoulli(0.70),
        "ace": Uniform(0.0, 0.4),
        "neuroticism": Uniform(0.3, 0.75),
        "conscientiousness": Uniform(0.45, 0.9),
        "openness": Uniform(0.45, 0.8),
        "delinquency": Longitudinal(0.08, 0.003, 0.003, waves=7, min_waves=4, clamp=True),
        "peer_cannabis_use": Longitudinal(0.12, 0.006, 0.01, waves=7, min_waves=4, clamp=True),
    },
    "chds_like": {
        "male": Bernoulli(0.50),
        "ace": Uniform(0.05, 0.65),
        "neuroticism": Uniform(0.0, 0.4),
        "conscientiousness": Uniform(0.2, 0.75),
        "openness": Uniform(0.3, 0.9),
        "delinquency": Longitudinal(0.09, 0.003, 0.003, waves=10, min_waves=6, clamp=True, first_age=7.0),
        "peer_cannabis_use": Longitudinal(0.16, 0.02, 0.02, waves=5, min_waves=3, clamp=True, first_age=15.0),
    },
}

DEMO_SHAPES = {"mls_like": (424, 0.125), "chds_like": (637, 0.1648)}

# Seeds for which the drawn case counts equal the published ones (53 and 105).
DEMO_SEEDS = {"mls_like": 6, "chds_like": 59}


def demo_model() -> ModelSpec:
    return model_from_dict(DEMO_MODEL)


def demo_config(name: str, seed: Optional[int] = None) -> SimConfig:
    if name not in DEMO_GENERATORS:
        raise InputError(f"unknown demo configuration {name!r}; choose from {sorted(DEMO_GENERATORS)}")
    n, prevalence = DEMO_SHAPES[name]
    return SimConfig(
        model=demo_model(),
        n=n,
        generators=DEMO_GENERATORS[name],
        seed=DEMO_SEEDS[name] if seed is None else seed,
        target_prevalence=prevalence,
        sex_predictor="male",
    )
