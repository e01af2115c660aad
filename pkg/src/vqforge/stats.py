"""Small statistical kernels shared by cleaning and analysis."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import Degenerate, LengthMismatch, TooFew, ZeroVariance


def moment_kurtosis(x):
    """m4 / m2**2 with population moments; ``nan`` when the variance is zero."""
    x = np.asarray(x, dtype=np.float64)
    dev = x - x.mean()
    m2 = np.mean(dev ** 2)
    if m2 == 0:
        return np.nan
    return float(np.mean(dev ** 4) / m2 ** 2)


def kurtosis(xs):
    """Pearson kurtosis coefficient beta2 (3 for a Gaussian, not excess)."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    if x.size < 4:
        raise TooFew(f"kurtosis needs at least 4 values, got {x.size}")
    b2 = moment_kurtosis(x)
    if np.isnan(b2):
        raise ZeroVariance("kurtosis of a constant sample is undefined")
    return b2


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise TooFew(f"correlation needs at least 3 pairs, got {x.size}")
    return x, y


def _pearson(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise Degenerate("correlation with a constant vector is undefined")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def lcc(x, y):
    """Pearson linear correlation coefficient."""
    return _pearson(*_pair(x, y))


def srcc(x, y):
    """Spearman rank correlation: Pearson correlation of mid-ranks (ties averaged)."""
    x, y = _pair(x, y)
    return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))
