"""Height tails ``Q_n = P(H(T) >= n)`` of the unconditioned tree.

``Q_{n+1} = 1 - G(1 - Q_n) = Q_n (m - ell(Q_n))``.  The table iterates the
generating function directly while ``Q_n >= 1e-6`` (and for an overlap
stretch beyond), then follows ``u_n = Q_n / m^n`` in log domain:

    log u_{n+1} = log u_n + log1p(-ell(Q_n) / m)

with ``ell`` evaluated from ``log Q_n`` so nothing underflows at ``n = 1e6``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .offspring import CauchyFamily, OffspringDistribution

SWITCH_Q = 1e-6
OVERLAP = 120
OVERLAP_RTOL = 1e-6
IDENTITY_RTOL = 1e-12
T_HI = 1e2
T_LO = 1e-2


class NumericalIntegrityError(RuntimeError):
    """Two independent evaluations of the same quantity disagree."""


class TableTooShort(ValueError):
    pass


@dataclass
class QTable:
    log_q: np.ndarray
    log_u: np.ndarray
    mode: np.ndarray  # "exact" or "hybrid" per index
    m: float
    n_switch: int  # first index where the hybrid recursion is seeded
    overlap_max_rel: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.log_q) - 1

    def q(self, n: int) -> float:
        return math.exp(self.log_q[n])


def ell_small(dist: OffspringDistribution, q: float) -> float:
    """``ell(q) = m - sum_k tail(k+1) (1-q)^k``, evaluated without truncation."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q={q} outside (0, 1]")
    return dist.ell(q)


def q_table(dist: OffspringDistribution, n_max: int) -> QTable:
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    m = dist.mean
    log_m = math.log(m)
    exact = [1.0]
    while len(exact) <= n_max and exact[-1] >= SWITCH_Q:
        exact.append(dist.one_minus_gen(exact[-1]))
    n_switch = len(exact) - 1
    stop = min(n_max, n_switch + OVERLAP)
    while len(exact) <= stop:
        exact.append(dist.one_minus_gen(exact[-1]))
    exact = np.array(exact)
    log_q = np.empty(n_max + 1)
    mode = np.empty(n_max + 1, dtype="<U6")
    log_q[: len(exact)] = np.log(exact)
    mode[: len(exact)] = "exact"

    overlap = 0.0
    if n_switch < n_max:
        lu = float(log_q[n_switch] - n_switch * log_m)
        hyb = np.empty(n_max + 1 - n_switch)
        hyb[0] = lu
        ell_log = dist.ell_log
        for i in range(n_max - n_switch):
            n = n_switch + i
            lq = lu + n * log_m
            lu += math.log1p(-ell_log(lq) / m)
            hyb[i + 1] = lu
        hyb_q = hyb + np.arange(n_switch, n_max + 1) * log_m
        ov = slice(n_switch, len(exact))
        diff = np.abs(np.expm1(hyb_q[: len(exact) - n_switch] - log_q[ov]))
        overlap = float(diff.max()) if diff.size else 0.0
        if overlap > OVERLAP_RTOL:
            raise NumericalIntegrityError(
                f"exact and hybrid Q disagree by {overlap:.3e} (relative) on "
                f"indices {n_switch}..{len(exact) - 1}")
        log_q[len(exact):] = hyb_q[len(exact) - n_switch:]
        mode[len(exact):] = "hybrid"
    log_u = log_q - np.arange(n_max + 1) * log_m
    diag = {"overlap_indices": [n_switch, len(exact) - 1], "overlap_max_rel": overlap}
    return QTable(log_q, log_u, mode, m, n_switch, overlap, diag)


def q_step_identity_check(dist: OffspringDistribution, n_range, table: QTable | None = None) -> dict:
    """Compare ``Q_{n+1}`` from the generating function with ``Q_n (m - ell(Q_n))``."""
    ns = list(n_range)
    if table is None:
        table = q_table(dist, max(ns) + 1)
    worst = 0.0
    ell_ok = True
    for n in ns:
        if table.mode[n + 1] != "exact":
            raise TableTooShort(f"index {n + 1} is not in the exact region")
        qn = table.q(n)
        lhs = table.q(n + 1)
        ell = dist.ell(qn)
        rhs = qn * (dist.mean - ell)
        rel = abs(lhs - rhs) / qn
        worst = max(worst, rel)
        if rel > IDENTITY_RTOL:
            raise NumericalIntegrityError(
                f"step identity fails at n={n}: |{lhs!r} - {rhs!r}| = {rel:.3e} Q_n")
        ell_ok = ell_ok and (0.0 <= ell < dist.mean)
    return {"n_checked": len(ns), "max_rel_error": worst, "ell_in_range": ell_ok,
            "tolerance": IDENTITY_RTOL}


def prop4_center(beta: float, c_eff: float, m: float, n: float) -> float:
    """``log n / log(1/m)`` minus the second-order correction for ``beta <= 1``."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    inv = math.log(1.0 / m)
    first = math.log(n) / inv
    if beta == 1.0:
        return first - c_eff * math.log(math.log(n)) / (m * inv ** 2)
    return first - c_eff * math.log(n) ** (1.0 - beta) / ((1.0 - beta) * beta * m * inv ** (1.0 + beta))


def prop4_log_u_target(beta: float, c_eff: float, m: float, n: float) -> float:
    """Leading behaviour of ``log u_n``: a multiple of ``log n`` or ``n^(1-beta)``."""
    inv = math.log(1.0 / m)
    if beta == 1.0:
        return -c_eff / (m * inv) * math.log(n)
    return -c_eff / ((1.0 - beta) * beta * m * inv ** beta) * n ** (1.0 - beta)


@dataclass
class HeightPrediction:
    n: int
    center: float
    second_order: float | None
    threshold_band: tuple

    def to_dict(self) -> dict:
        return {"n": self.n, "center": self.center, "second_order": self.second_order,
                "band": list(self.threshold_band)}


def threshold_band(table: QTable, n: int, t_hi: float = T_HI, t_lo: float = T_LO) -> tuple[int, int]:
    """``(max{h : n Q_h >= t_hi}, min{h : n Q_h <= t_lo})``."""
    lnq = math.log(n) + table.log_q
    above = np.flatnonzero(lnq >= math.log(t_hi))
    below = np.flatnonzero(lnq <= math.log(t_lo))
    if below.size == 0:
        raise TableTooShort("table does not reach n Q_h <= t_lo")
    h_lo = int(above.max()) if above.size else 0
    return h_lo, int(below.min())


def height_prediction(dist: OffspringDistribution, n: int, table: QTable | None = None) -> HeightPrediction:
    m = dist.mean
    center = math.log(n) / math.log(1.0 / m)
    need = int(math.ceil(3.0 * center)) + 1
    if table is None:
        table = q_table(dist, need)
    if table.n_max < need:
        raise TableTooShort(f"table depth {table.n_max} < {need}")
    second = None
    if isinstance(dist, CauchyFamily) and dist.beta <= 1.0:
        second = prop4_center(dist.beta, dist.c_eff, m, n)
    return HeightPrediction(int(n), center, second, threshold_band(table, n))


@dataclass
class BoundsCertificate:
    eta: float
    n0: int  # first index from which ell(Q_n) <= eta/2
    n1: int  # rank from which (m - eta)^n <= Q_n is implied
    holds: bool
    n_max: int


def qn_bounds_check(dist: OffspringDistribution, eta: float, table: QTable) -> BoundsCertificate:
    """Check ``(m - eta)^n <= Q_n <= m^n`` from a derived rank up to the table end."""
    m = dist.mean
    if not 0.0 < eta < m:
        raise ValueError("eta must lie in (0, m)")
    ells = _ell_along(dist, table)
    bad = np.flatnonzero(ells > eta / 2.0)
    n0 = int(bad.max()) + 1 if bad.size else 0
    if n0 > table.n_max:
        raise TableTooShort("ell(Q_n) stays above eta/2 on the whole table")
    # from n0 on Q_n >= Q_{n0} (m - eta/2)^(n - n0); find where that beats (m - eta)^n
    a, b = math.log(m - eta / 2.0), math.log(m - eta)
    base = table.log_q[n0] - n0 * a
    n1 = n0 if base >= 0 else max(n0, int(math.ceil(base / (b - a))))
    idx = np.arange(table.n_max + 1)
    upper = bool(np.all(table.log_u <= 1e-12))
    lower = bool(np.all(table.log_q[n1:] >= idx[n1:] * b))
    return BoundsCertificate(eta, n0, n1, upper and lower, table.n_max)


def _ell_along(dist: OffspringDistribution, table: QTable) -> np.ndarray:
    """``ell(Q_n)`` along the table, recovered from consecutive log ratios where exact."""
    out = np.empty(table.n_max)
    m = table.m
    for n in range(table.n_max):
        out[n] = m - math.exp(table.log_q[n + 1] - table.log_q[n])
    return out
