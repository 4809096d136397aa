"""Repeated stratified holdout check of intercept recalibration.

Each repetition splits the cohort 50/50 within cases and within controls,
estimates the calibration intercept on the training half and scores the
adjusted model on the test half.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import expected_observed
from .discrimination import auc
from .errors import RiskvalError, TooFewPerStratum
from .glm import fit_calibration_intercept
from .model_core import ModelSpec, predict_probability

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitResult:
    rep: int
    seed: list
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    calibration_intercept: float | None
    test_auc: float | None
    test_eo: float | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "rep": self.rep,
            "seed": self.seed,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "calibration_intercept": self.calibration_intercept,
            "test_auc": self.test_auc,
            "test_eo": self.test_eo,
            "error": self.error,
        }


@dataclass(frozen=True)
class HoldoutSummary:
    reps: int
    seed: int
    per_rep: tuple[SplitResult, ...]
    mean_auc: float | None
    mean_eo: float | None
    mean_intercept: float | None

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "per_rep": [r.to_dict() for r in self.per_rep],
            "mean_auc": self.mean_auc,
            "mean_eo": self.mean_eo,
            "mean_intercept": self.mean_intercept,
        }


def stratified_split_indices(labels, fraction: float = 0.5, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (train, test), shuffling cases and controls separately.

    Each stratum contributes round(fraction * count) members to the training
    half (Python rounding, so 26.5 -> 26).
    """
    y = np.asarray(labels)
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    train, test = [], []
    for stratum in (1, 0):
        idx = np.flatnonzero(y == stratum)
        if idx.size < 2:
            raise TooFewPerStratum(f"need at least 2 subjects with outcome {stratum}, found {idx.size}")
        idx = rng.permutation(idx)
        cut = round(fraction * idx.size)
        cut = min(max(cut, 1), idx.size - 1)
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(cohort, fraction: float = 0.5, rng=None):
    """Split a cohort into (train, test) cohorts stratified on outcome."""
    tr, te = stratified_split_indices(cohort.labels, fraction, rng)
    ids = cohort.ids
    return cohort.subset([ids[i] for i in tr]), cohort.subset([ids[i] for i in te])


def rep_seed_sequence(seed: int, rep: int) -> np.random.SeedSequence:
    # Equivalent to SeedSequence(seed).spawn(...)[rep]; independent of run order.
    return np.random.SeedSequence(entropy=seed, spawn_key=(rep,))


def run_rep(lp: np.ndarray, labels: np.ndarray, ids: list[str], rep: int, seed: int,
            fraction: float = 0.5) -> SplitResult:
    ss = rep_seed_sequence(seed, rep)
    seed_label = [int(seed), rep]
    tr, te = stratified_split_indices(labels, fraction, np.random.default_rng(ss))
    train_ids = tuple(ids[i] for i in tr)
    test_ids = tuple(ids[i] for i in te)
    try:
        a = fit_calibration_intercept(labels[tr], lp[tr])
        p_test = predict_probability(lp[te] + a)
        eo = expected_observed(p_test, labels[te]).require_ratio()
        return SplitResult(rep, seed_label, train_ids, test_ids, a, auc(lp[te], labels[te]), eo)
    except RiskvalError as exc:
        logger.warning("repetition %d aborted: %s", rep, exc)
        return SplitResult(rep, seed_label, train_ids, test_ids, None, None, None, error=str(exc))


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def repeated_holdout(cohort, model: ModelSpec, reps: int = 20, seed: int = 0,
                     fraction: float = 0.5, jobs: int = 1) -> HoldoutSummary:
    if reps < 1:
        raise ValueError("reps must be at least 1")
    lp = cohort.linear_predictors(model)
    labels = cohort.labels
    ids = cohort.ids
    # fail fast on unsplittable cohorts instead of recording `reps` identical errors
    stratified_split_indices(labels, fraction, np.random.default_rng(0))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: run_rep(lp, labels, ids, r, seed, fraction), range(reps)))
    else:
        results = [run_rep(lp, labels, ids, r, seed, fraction) for r in range(reps)]
    results.sort(key=lambda r: r.rep)
    ok = [r for r in results if r.error is None]
    return HoldoutSummary(
        reps=reps,
        seed=seed,
        per_rep=tuple(results),
        mean_auc=_mean(r.test_auc for r in ok),
        mean_eo=_mean(r.test_eo for r in ok),
        mean_intercept=_mean(r.calibration_intercept for r in ok),
    )
