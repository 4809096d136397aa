"""Logistic risk model: linear predictor, probabilities, intercept update, count score."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingFeature, ModelFormatError, NonFiniteInput

KINDS = ("cross_sectional", "longitudinal")
SUMMARIZERS = ("identity", "wave_mean", "random_intercept")
RANGES = ("unit_interval", "binary")

# Risk rises as these predictors fall; everything else is risk-increasing.
DEFAULT_REVERSE_CODED = frozenset({"conscientiousness"})


@dataclass(frozen=True)
class PredictorSpec:
    name: str
    kind: str = "cross_sectional"
    summarizer: str = "identity"
    range: str = "unit_interval"

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ModelFormatError(f"invalid predictor name {self.name!r}")
        if self.kind not in KINDS:
            raise ModelFormatError(f"{self.name}: unknown kind {self.kind!r}")
        if self.summarizer not in SUMMARIZERS:
            raise ModelFormatError(f"{self.name}: unknown summarizer {self.summarizer!r}")
        if self.range not in RANGES:
            raise ModelFormatError(f"{self.name}: unknown range {self.range!r}")
        if self.kind == "cross_sectional" and self.summarizer != "identity":
            raise ModelFormatError(f"{self.name}: cross-sectional predictors use the identity summarizer")
        if self.kind == "longitudinal" and self.summarizer == "identity":
            raise ModelFormatError(f"{self.name}: longitudinal predictors need wave_mean or random_intercept")

    @property
    def continuous(self) -> bool:
        return self.range != "binary"


@dataclass(frozen=True)
class ModelSpec:
    """A fitted logistic model with explicit predictor order.

    ``coefficients`` is stored as a tuple of (name, value) pairs so that the
    dot product is always summed in file order.
    """

    intercept: float
    coefficients: tuple[tuple[str, float], ...]
    predictors: tuple[PredictorSpec, ...]
    provenance: str = ""

    def __post_init__(self):
        names = [p.name for p in self.predictors]
        if len(set(names)) != len(names):
            raise ModelFormatError("predictor names must be unique")
        coef_names = [c for c, _ in self.coefficients]
        if len(set(coef_names)) != len(coef_names):
            raise ModelFormatError("coefficient names must be unique")
        if set(coef_names) != set(names):
            extra = sorted(set(coef_names) ^ set(names))
            raise ModelFormatError(f"coefficients and predictors disagree on {extra}")
        if not math.isfinite(self.intercept):
            raise ModelFormatError("intercept must be finite")
        for c, v in self.coefficients:
            if not math.isfinite(v):
                raise ModelFormatError(f"coefficient {c!r} must be finite")

    @property
    def names(self) -> list[str]:
        return [c for c, _ in self.coefficients]

    @property
    def coefficient_map(self) -> dict[str, float]:
        return dict(self.coefficients)

    def predictor(self, name: str) -> PredictorSpec:
        for p in self.predictors:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def continuous_predictors(self) -> list[str]:
        return [p.name for p in self.predictors if p.continuous]

    @property
    def binary_predictors(self) -> list[str]:
        return [p.name for p in self.predictors if not p.continuous]

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coefficients": {c: v for c, v in self.coefficients},
            "predictors": [
                {"name": p.name, "kind": p.kind, "summarizer": p.summarizer, "range": p.range}
                for p in self.predictors
            ],
            "provenance": self.provenance,
        }


_MODEL_FIELDS = {"intercept", "coefficients", "predictors", "provenance"}
_PREDICTOR_FIELDS = {"name", "kind", "summarizer", "range"}


def model_from_dict(doc: Mapping) -> ModelSpec:
    if not isinstance(doc, Mapping):
        raise ModelFormatError("model document must be an object")
    unknown = set(doc) - _MODEL_FIELDS
    if unknown:
        raise ModelFormatError(f"unknown model fields: {sorted(unknown)}")
    for key in ("intercept", "coefficients", "predictors"):
        if key not in doc:
            raise ModelFormatError(f"model is missing {key!r}")
    coefs = doc["coefficients"]
    if not isinstance(coefs, Mapping):
        raise ModelFormatError("coefficients must be an object")
    preds = []
    for entry in doc["predictors"]:
        if not isinstance(entry, Mapping):
            raise ModelFormatError("each predictor must be an object")
        bad = set(entry) - _PREDICTOR_FIELDS
        if bad:
            raise ModelFormatError(f"unknown predictor fields: {sorted(bad)}")
        if "name" not in entry:
            raise ModelFormatError("predictor without a name")
        preds.append(PredictorSpec(**entry))
    try:
        intercept = float(doc["intercept"])
        coefficients = tuple((str(k), float(v)) for k, v in coefs.items())
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"non-numeric model value: {exc}") from None
    # Predictor list order wins; the coefficient object is reordered to match it.
    cmap = dict(coefficients)
    if set(cmap) == {p.name for p in preds}:
        coefficients = tuple((p.name, cmap[p.name]) for p in preds)
    return ModelSpec(
        intercept=intercept,
        coefficients=coefficients,
        predictors=tuple(preds),
        provenance=str(doc.get("provenance", "")),
    )


def load_model(path) -> ModelSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return model_from_dict(doc)


def dump_model(model: ModelSpec) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def linear_predictor(model: ModelSpec, x: Mapping[str, float]) -> float:
    total = model.intercept
    for name, beta in model.coefficients:
        if name not in x or x[name] is None:
            raise MissingFeature(name)
        total += beta * float(x[name])
    return total


def linear_predictors(model: ModelSpec, features: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized :func:`linear_predictor` over columns of a feature table.

    Accumulates term by term in predictor order, so each entry equals the
    scalar version bit for bit.
    """
    total = None
    for name, beta in model.coefficients:
        if name not in features:
            raise MissingFeature(name)
        col = np.asarray(features[name], dtype=float)
        total = model.intercept + beta * col if total is None else total + beta * col
    if total is None:
        n = len(next(iter(features.values()))) if features else 0
        total = np.full(n, model.intercept)
    return total


def predict_probability(lp):
    """Inverse logit, stable for large |lp|. Accepts scalars or arrays."""
    arr = np.asarray(lp, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("linear predictor must be finite")
    # exp(-|lp|) never overflows; branch on sign picks the matching form.
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if out.ndim == 0:
        return float(out)
    return out


def update_intercept(model: ModelSpec, delta: float) -> ModelSpec:
    if not math.isfinite(delta):
        raise NonFiniteInput("intercept update must be finite")
    return replace(model, intercept=model.intercept + float(delta))


@dataclass(frozen=True)
class MedianCutoffs:
    cutoffs: Mapping[str, float]
    reverse_coded: frozenset = field(default=DEFAULT_REVERSE_CODED)

    @classmethod
    def from_features(cls, model: ModelSpec, features: Mapping[str, Sequence[float]],
                      reverse_coded=DEFAULT_REVERSE_CODED) -> "MedianCutoffs":
        return cls(
            {name: float(np.median(np.asarray(features[name], dtype=float)))
             for name in model.continuous_predictors},
            frozenset(reverse_coded),
        )


def count_score(x: Mapping[str, float], cutoffs: MedianCutoffs, sex_value: int) -> int:
    """Number of risk indicators present: one per continuous predictor on
    the risk side of its median, plus one for male sex."""
    if sex_value not in (0, 1):
        raise ValueError("sex_value must be 0 or 1")
    score = int(sex_value)
    for name, cut in cutoffs.cutoffs.items():
        if name not in x or x[name] is None:
            raise MissingFeature(name)
        v = float(x[name])
        if name in cutoffs.reverse_coded:
            score += v < cut
        else:
            score += v > cut
    return score
