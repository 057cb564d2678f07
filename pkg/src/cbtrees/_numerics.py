"""Small numerical kernels shared by the offspring and heights code.

Everything here is vectorised over numpy arrays and avoids the two
cancellations that show up everywhere in this package: ``y - 1 + exp(-y)``
for small ``y`` and ``1 + log1p(-q)/q`` for small ``q``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# Taylor coefficients of h(y) = y - 1 + exp(-y) = sum_{j>=2} (-1)^j y^j / j!
_H_COEFFS = np.array([(-1.0) ** j / math.factorial(j) for j in range(2, 22)])


def h_func(y):
    """Return ``y - 1 + exp(-y)`` without cancellation for small ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y < 0.5
    if np.any(small):
        ys = y[small]
        acc = np.zeros_like(ys)
        for c in _H_COEFFS[::-1]:
            acc = acc * ys + c
        out[small] = acc * ys * ys
    big = ~small
    if np.any(big):
        yb = y[big]
        out[big] = yb + np.expm1(-yb)
    return out


def psi_log(v):
    """Return ``h(e^v) / e^v`` for log-scale arguments ``v``.

    Tends to ``e^v / 2`` as ``v -> -inf`` and to 1 as ``v -> +inf``.
    """
    v = np.asarray(v, dtype=float)
    y = np.exp(np.minimum(v, 700.0))
    out = np.empty_like(y)
    small = y < 0.5
    if np.any(small):
        ys = y[small]
        acc = np.zeros_like(ys)
        for c in _H_COEFFS[::-1]:
            acc = acc * ys + c
        out[small] = acc * ys
    big = ~small
    if np.any(big):
        yb = y[big]
        out[big] = 1.0 + np.expm1(-yb) / yb
    return out


def one_minus_lambda_ratio(q: float) -> float:
    """Return ``1 - lam/q`` with ``lam = -log1p(-q)``, i.e. ``-(q/2 + q^2/3 + ...)``."""
    if q < 0.05:
        acc = 0.0
        for j in range(24, 0, -1):
            acc = acc * q + 1.0 / (j + 1)
        return -q * acc
    return 1.0 + math.log1p(-q) / q


@lru_cache(maxsize=8)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gl_nodes(a: float, b: float, width: float = 1.0, order: int = 20):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    if b <= a:
        return np.empty(0), np.empty(0)
    x0, w0 = _legendre(order)
    npan = max(1, int(math.ceil((b - a) / width)))
    edges = np.linspace(a, b, npan + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    return nodes, weights


def log_e_shift(t):
    """Return ``log(e^t + e)`` for log-scale ``t`` without overflow."""
    t = np.asarray(t, dtype=float)
    return np.where(t > 1.0, t + np.log1p(np.exp(1.0 - np.maximum(t, 1.0))),
                    np.log(np.exp(np.minimum(t, 1.0)) + math.e))
