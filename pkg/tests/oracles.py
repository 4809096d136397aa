"""Independent reference computations used only by the tests.

Nothing here imports the code under test.
"""

from fractions import Fraction
import math

import numpy as np


def pairwise_auc(scores, labels):
    """O(n^2) Mann-Whitney count over every case-control pair."""
    cases = [s for s, y in zip(scores, labels) if y == 1]
    controls = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for x in cases:
        for c in controls:
            if x > c:
                total += 1.0
            elif x == c:
                total += 0.5
    return total / (len(cases) * len(controls))


def pairwise_placements(scores, labels):
    cases = [s for s, y in zip(scores, labels) if y == 1]
    controls = [s for s, y in zip(scores, labels) if y == 0]

    def psi(x, c):
        return 1.0 if x > c else 0.5 if x == c else 0.0

    v10 = [sum(psi(x, c) for c in controls) / len(controls) for x in cases]
    v01 = [sum(psi(x, c) for x in cases) / len(cases) for c in controls]
    return v10, v01


def delong_variance_bruteforce(scores, labels):
    v10, v01 = pairwise_placements(scores, labels)
    m, n = len(v10), len(v01)
    a = sum(v10) / m
    s10 = sum((v - a) ** 2 for v in v10) / (m - 1)
    s01 = sum((v - a) ** 2 for v in v01) / (n - 1)
    return s10 / m + s01 / n


def trapezoid_roc_area(scores, labels):
    """Area under the empirical ROC by explicit threshold sweep."""
    pos = sum(labels)
    neg = len(labels) - pos
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        pts.append((fp / neg, tp / pos))
    return sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(pts, pts[1:]))


def intercept_by_bisection(y, offset, lo=-20.0, hi=20.0, tol=1e-12):
    """Root of the intercept score sum(y - sigmoid(a + offset)) by bisection."""

    def score(a):
        return sum(yi - 1.0 / (1.0 + math.exp(-(a + o))) for yi, o in zip(y, offset))

    f_lo = score(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = score(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def gls_blups(series_values, mu, tau2, sigma2):
    """BLUPs from the stacked mixed model: b = tau2 Z' V^-1 (y - mu)."""
    y = np.concatenate([np.asarray(v, float) for v in series_values])
    n_i = [len(v) for v in series_values]
    N, k = len(y), len(n_i)
    Z = np.zeros((N, k))
    row = 0
    for i, n in enumerate(n_i):
        Z[row:row + n, i] = 1.0
        row += n
    V = tau2 * Z @ Z.T + sigma2 * np.eye(N)
    return tau2 * Z.T @ np.linalg.solve(V, y - mu)


def anova_moments_exact(series_values):
    """One-way unbalanced ANOVA variance components in exact rationals."""
    groups = [[Fraction(v) for v in s] for s in series_values]
    k = len(groups)
    N = sum(len(g) for g in groups)
    grand = sum(sum(g) for g in groups) / N
    means = [sum(g) / len(g) for g in groups]
    ssw = sum(sum((v - m) ** 2 for v in g) for g, m in zip(groups, means))
    ssb = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    msw = ssw / (N - k)
    msb = ssb / (k - 1)
    n0 = (N - Fraction(sum(len(g) ** 2 for g in groups), N)) / (k - 1)
    tau2 = max(Fraction(0), (msb - msw) / n0)
    return grand, tau2, msw
