"""SRCC, PLCC and KRCC between predicted and subjective scores.

Degenerate inputs (a constant argument) give 0 and a
``DegenerateCorrelationWarning`` instead of raising, so result tables stay
total.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import rankdata


class DegenerateCorrelationWarning(UserWarning):
    pass


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.size < 2:
        raise ValueError("need at least two pairs")
    return x, y


def plcc(x, y) -> float:
    """Pearson linear correlation, no nonlinear pre-mapping."""
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    den = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if den == 0:
        warnings.warn("PLCC undefined for constant input", DegenerateCorrelationWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(dx, dy) / den, -1.0, 1.0))


def srcc(x, y) -> float:
    """Spearman correlation: Pearson on mid-ranks."""
    x, y = _pair(x, y)
    rx, ry = rankdata(x), rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        warnings.warn("SRCC undefined for constant input", DegenerateCorrelationWarning, stacklevel=2)
        return 0.0
    return plcc(rx, ry)


def krcc(x, y, chunk=2048) -> float:
    """Kendall tau-b, counted pairwise in row chunks."""
    x, y = _pair(x, y)
    n = x.size
    s = 0.0
    tie_x = tie_y = 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.sign(x[start:stop, None] - x[None, :])
        dy = np.sign(y[start:stop, None] - y[None, :])
        # keep pairs (i, j) with j > i only
        upper = np.arange(start, stop)[:, None] < np.arange(n)[None, :]
        s += float(np.sum(dx * dy * upper))
        tie_x += int(np.sum((dx == 0) & upper))
        tie_y += int(np.sum((dy == 0) & upper))
    n0 = n * (n - 1) // 2
    den = np.sqrt(float(n0 - tie_x) * float(n0 - tie_y))
    if den == 0:
        warnings.warn("KRCC undefined for constant input", DegenerateCorrelationWarning, stacklevel=2)
        return 0.0
    return float(np.clip(s / den, -1.0, 1.0))


def correlations(pred, target) -> dict:
    return {"srcc": srcc(pred, target), "plcc": plcc(pred, target), "krcc": krcc(pred, target)}
