"""Logistic regression by IRLS with offset support.

Each Newton step is solved as a weighted least-squares problem through a
column-pivoted QR factorization of sqrt(W) X; the information matrix is
never formed explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import ConstantOutcome, InputError, Separation, SingularInformation

logger = logging.getLogger(__name__)

SCORE_TOL = 1e-8
MAX_ITER = 50
SEPARATION_BOUND = 15.0
MAX_HALVINGS = 30


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    log_likelihood: float


@dataclass(frozen=True)
class CalibrationFit:
    intercept: float
    slope: float | None
    converged: bool
    iterations: int
    max_abs_score: float
    line_intercept: float | None = None

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "line_intercept": self.line_intercept,
            "converged": self.converged,
            "iterations": self.iterations,
            "max_abs_score": self.max_abs_score,
        }


def _log_likelihood(eta, y):
    # sum y*eta - log(1 + exp(eta)), with a stable softplus
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _mu(eta):
    e = np.exp(-np.abs(eta))
    return np.where(eta >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def fit_logistic(design, y, offset=None, tol: float = SCORE_TOL, max_iter: int = MAX_ITER,
                 separation_bound: float = SEPARATION_BOUND) -> GlmFit:
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise InputError("design and outcome lengths differ")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("outcome must be binary 0/1")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if off.shape != (n,):
        raise InputError("offset length differs from outcome")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(off))):
        raise InputError("design and offset must be finite")
    if p < 1 or n < p:
        raise InputError(f"need n >= p >= 1, got n={n}, p={p}")
    if y.min() == y.max():
        raise ConstantOutcome("outcome is constant; the logistic MLE does not exist")

    _, r_full, _ = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_full))
    if diag[-1] <= diag[0] * max(n, p) * np.finfo(float).eps:
        raise SingularInformation("design matrix is rank deficient")

    beta = np.zeros(p)
    eta = off + X @ beta
    ll = _log_likelihood(eta, y)
    mu = _mu(eta)
    score = X.T @ (y - mu)
    iterations = 0
    while np.max(np.abs(score)) >= tol and iterations < max_iter:
        iterations += 1
        w = mu * (1.0 - mu)
        sw = np.sqrt(w)
        if np.any(sw == 0):
            raise Separation("fitted probabilities reached 0 or 1")
        q_mat, r_mat, piv = qr(sw[:, None] * X, mode="economic", pivoting=True)
        rd = np.abs(np.diag(r_mat))
        if rd[-1] <= rd[0] * max(n, p) * np.finfo(float).eps:
            raise SingularInformation("weighted information matrix is singular")
        z = (y - mu) / sw
        step = np.empty(p)
        step[piv] = solve_triangular(r_mat, q_mat.T @ z)

        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            eta_c = off + X @ cand
            ll_c = _log_likelihood(eta_c, y)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            logger.debug("step halving exhausted at iteration %d", iterations)
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(beta)) > separation_bound:
            raise Separation(
                f"coefficient magnitude exceeded {separation_bound:g} logits; "
                "the data are (quasi-)separated"
            )
        mu = _mu(eta)
        score = X.T @ (y - mu)

    max_score = float(np.max(np.abs(score)))
    converged = max_score < tol
    if not converged:
        logger.warning("IRLS stopped after %d iterations with max |score| %.3g", iterations, max_score)
    return GlmFit(coefficients=beta, converged=converged, iterations=iterations,
                  max_abs_score=max_score, log_likelihood=ll)


def fit_calibration_line(y, lp) -> tuple[float, float]:
    """Calibration intercept and slope: logistic regression of outcome on lp."""
    return _calibration_line(y, lp)[:2]


def _calibration_line(y, lp):
    lp = np.asarray(lp, dtype=float)
    if lp.size and np.ptp(lp) == 0:
        raise SingularInformation("linear predictor is constant; calibration slope is not identifiable")
    X = np.column_stack([np.ones_like(lp), lp])
    fit = fit_logistic(X, y)
    return float(fit.coefficients[0]), float(fit.coefficients[1]), fit


def fit_calibration_intercept(y, lp) -> float:
    """Intercept-only logistic fit with lp as offset (slope fixed at 1)."""
    return calibration_intercept_fit(y, lp).intercept


def calibration_intercept_fit(y, lp) -> CalibrationFit:
    lp = np.asarray(lp, dtype=float)
    if lp.size < 1:
        raise InputError("need at least one observation")
    fit = fit_logistic(np.ones((lp.size, 1)), y, offset=lp)
    return CalibrationFit(intercept=float(fit.coefficients[0]), slope=None,
                          converged=fit.converged, iterations=fit.iterations,
                          max_abs_score=fit.max_abs_score)


def calibration_fit(y, lp) -> CalibrationFit:
    """Calibration intercept (slope fixed at 1) together with the free-slope line's slope."""
    icpt = calibration_intercept_fit(y, lp)
    try:
        line_a, slope, _ = _calibration_line(y, lp)
    except (Separation, SingularInformation) as exc:
        logger.warning("calibration slope not estimable: %s", exc)
        line_a = slope = None
    return CalibrationFit(intercept=icpt.intercept, slope=slope, converged=icpt.converged,
                          iterations=icpt.iterations, max_abs_score=icpt.max_abs_score,
                          line_intercept=line_a)
