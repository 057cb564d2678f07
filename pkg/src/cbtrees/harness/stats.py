"""Goodness-of-fit statistics with asymptotic p-values.

* Two-sample KS: ``D = sup |F_a - F_b|``; ``p = K(sqrt(n_e) D)`` with
  ``n_e = n_a n_b / (n_a + n_b)`` and ``K`` the Kolmogorov survival function.
* One-sample KS against a continuous cdf ``F``: same with ``n_e = n``.
* Pearson chi-square: ``sum (O - E)^2 / E`` with ``k - 1 - ddof`` degrees of
  freedom.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import chi2

MIN_SIZE = 30


def _check(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be a nonempty finite sample")
    return x


def ks_two_sample(a, b) -> tuple[float, float]:
    a = np.sort(_check(a, "a"))
    b = np.sort(_check(b, "b"))
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    ne = a.size * b.size / (a.size + b.size)
    return d, float(kolmogorov(math.sqrt(ne) * d))


def ks_one_sample(x, cdf) -> tuple[float, float]:
    """KS distance between the empirical law of ``x`` and a continuous cdf."""
    x = np.sort(_check(x, "x"))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    d = float(max(np.max(hi - f), np.max(f - lo)))
    return d, float(kolmogorov(math.sqrt(n) * d))


def ks_critical(alpha: float, n_a: int, n_b: int | None = None) -> float:
    """Asymptotic critical value ``sqrt(-log(alpha/2)/2) / sqrt(n_e)``."""
    ne = n_a if n_b is None else n_a * n_b / (n_a + n_b)
    return math.sqrt(-math.log(alpha / 2.0) / 2.0) / math.sqrt(ne)


def chi_square_gof(observed, expected, ddof: int = 0) -> tuple[float, float]:
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.size < 2 or np.any(e <= 0):
        raise ValueError("need matching bins with positive expected counts")
    stat = float(np.sum((o - e) ** 2 / e))
    return stat, float(chi2.sf(stat, o.size - 1 - ddof))


def median_with_se(x) -> tuple[float, float]:
    """Median and a distribution-free standard error from order statistics."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    med = float(np.median(x))
    if n < 4:
        return med, float("nan")
    half = 1.96 * math.sqrt(n) / 2.0
    lo = int(max(0, math.floor(n / 2.0 - half)))
    hi = int(min(n - 1, math.ceil(n / 2.0 + half)))
    return med, float((x[hi] - x[lo]) / (2.0 * 1.96))


def mean_with_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(x.mean()), se
