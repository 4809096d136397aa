"""Summaries of per-subject longitudinal series.

The random-intercept summarizer assumes the one-way model

    y_ij = mu + b_i + e_ij,   b_i ~ N(0, tau2),   e_ij ~ N(0, sigma2)

and returns the BLUP of b_i for each subject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateDesign, EmptySeries, InputError, NonFiniteInput


@dataclass(frozen=True)
class SubjectSeries:
    subject_id: str
    values: tuple[float, ...]
    waves: tuple[int, ...] = field(default=())
    ages: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise NonFiniteInput(f"subject {self.subject_id}: non-finite series value")

    def __len__(self):
        return len(self.values)

    @property
    def mean(self) -> float:
        return wave_mean(self)


@dataclass(frozen=True)
class VarianceComponents:
    mu: float
    tau2: float
    sigma2: float
    method: str = "moments"

    def __post_init__(self):
        # sigma2 = 0 is accepted for known-truth use (no within-subject noise);
        # the estimators never return it.
        if self.tau2 < 0 or self.sigma2 < 0:
            raise InputError("variance components must be non-negative")

    def to_dict(self) -> dict:
        return {"mu": self.mu, "tau2": self.tau2, "sigma2": self.sigma2, "method": self.method}


def wave_mean(series: SubjectSeries) -> float:
    if len(series.values) == 0:
        raise EmptySeries(f"subject {series.subject_id}: empty series")
    return math.fsum(series.values) / len(series.values)


def _group_stats(all_series: Sequence[SubjectSeries]):
    if len(all_series) < 2:
        raise DegenerateDesign("variance components need at least two subjects")
    for s in all_series:
        if len(s) == 0:
            raise EmptySeries(f"subject {s.subject_id}: empty series")
    n_i = np.array([len(s) for s in all_series], dtype=float)
    means = np.array([wave_mean(s) for s in all_series])
    ssw = math.fsum(math.fsum((v - m) ** 2 for v in s.values) for s, m in zip(all_series, means))
    return n_i, means, ssw


def _moments(all_series):
    n_i, means, ssw = _group_stats(all_series)
    k = len(n_i)
    N = n_i.sum()
    if N - k <= 0:
        raise DegenerateDesign("every subject has a single observation; within-subject variance is unidentifiable")
    if ssw <= 0:
        raise DegenerateDesign("no within-subject variation; within-subject variance is zero")
    grand = math.fsum(v for s in all_series for v in s.values) / N
    msw = ssw / (N - k)
    ssb = math.fsum(n * (m - grand) ** 2 for n, m in zip(n_i, means))
    msb = ssb / (k - 1)
    n0 = (N - float(np.sum(n_i**2)) / N) / (k - 1)
    tau2 = max(0.0, (msb - msw) / n0)
    return VarianceComponents(mu=float(grand), tau2=float(tau2), sigma2=float(msw), method="moments")


def _reml(all_series, rtol=1e-8):
    n_i, means, ssw = _group_stats(all_series)
    k = len(n_i)
    N = n_i.sum()
    if N - k <= 0:
        raise DegenerateDesign("every subject has a single observation; within-subject variance is unidentifiable")
    if ssw <= 0:
        raise DegenerateDesign("no within-subject variation; within-subject variance is zero")

    def pieces(lam):
        w = n_i / (1.0 + n_i * lam)
        mu = float(np.sum(w * means) / np.sum(w))
        q = ssw + float(np.sum(w * (means - mu) ** 2))
        return w, mu, q

    def objective(lam):
        # -2 * profiled REML log-likelihood, up to a constant
        w, _, q = pieces(lam)
        return (N - 1) * math.log(q) + float(np.sum(np.log1p(n_i * lam))) + math.log(float(np.sum(w)))

    # Search on log(lambda) so the tolerance is relative in lambda.
    res = minimize_scalar(lambda t: objective(math.exp(t)), bounds=(-30.0, 14.0),
                          method="bounded", options={"xatol": rtol})
    lam = math.exp(res.x)
    if objective(0.0) <= objective(lam):
        lam = 0.0
    _, mu, q = pieces(lam)
    sigma2 = q / (N - 1)
    return VarianceComponents(mu=float(mu), tau2=float(lam * sigma2), sigma2=float(sigma2), method="reml")


def estimate_variance_components(all_series: Sequence[SubjectSeries], method: str = "moments") -> VarianceComponents:
    """Estimate (mu, tau2, sigma2) from a set of subject series.

    ``moments`` is the unbalanced one-way ANOVA estimator with tau2 clipped
    at zero; ``reml`` maximizes the restricted likelihood profiled over the
    variance ratio.
    """
    if method == "moments":
        return _moments(all_series)
    if method == "reml":
        return _reml(all_series)
    raise InputError(f"unknown variance-component method {method!r}")


def blup(series: SubjectSeries, vc: VarianceComponents) -> float:
    ybar = wave_mean(series)
    if vc.tau2 == 0:
        return 0.0
    shrink = vc.tau2 / (vc.tau2 + vc.sigma2 / len(series))
    return shrink * (ybar - vc.mu)
