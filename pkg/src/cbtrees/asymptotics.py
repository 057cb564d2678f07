"""Scaling and centering sequences of the jump walk.

With ``X = xi - 1`` and ``P(X >= a) = tail(a + 1)``:

* ``a_n = min{a >= 1 : n P(X >= a) <= 1}``
* ``b_n = n E[X; |X| <= a_n]``
* ``ell_star(n) = sum_{k >= n} k mu_k``
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .offspring import OffspringDistribution


def ell_star(dist: OffspringDistribution, n) -> float:
    """``sum_{k >= n} k mu_k``; real arguments are rounded up."""
    k = int(math.ceil(n))
    if k < 1:
        raise ValueError("ell_star needs n >= 1")
    return dist.moment_tail(k)


def scaling_a(dist: OffspringDistribution, n: int) -> int:
    """Smallest ``a >= 1`` with ``n tail(a+1) <= 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n * dist.tail(2) <= 1.0:
        return 1
    lo, hi = 1, 2
    while n * dist.tail(hi + 1) > 1.0:
        lo, hi = hi, 2 * hi
    # invariant: n tail(lo+1) > 1 >= n tail(hi+1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if n * dist.tail(mid + 1) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def centering_b(dist: OffspringDistribution, n: int, a_n: int | None = None) -> float:
    """``n E[X; X <= a_n]`` (jumps are >= -1 so only the upper cut matters)."""
    a = scaling_a(dist, n) if a_n is None else a_n
    inner = dist.mean - 1.0 - dist.moment_tail(a + 2) + dist.tail(a + 2)
    return n * inner


def slowly_varying_L(dist: OffspringDistribution, k: int) -> float:
    """``L(k) = k^2 mu_k``."""
    return float(k) * float(k) * dist.pmf(k)


@dataclass
class SequenceTable:
    n_values: list
    a_n: list
    b_n: list
    ell_star_at_a_n: list
    ell_star_at_n: list
    L_over_ellstar: list
    a_over_n: list
    gamma: float
    finite_support: bool = False
    flags: dict = field(default_factory=dict)

    def rows(self):
        for i, n in enumerate(self.n_values):
            yield {"n": n, "a_n": self.a_n[i], "b_n": self.b_n[i],
                   "ell_star_n": self.ell_star_at_n[i],
                   "ell_star_a_n": self.ell_star_at_a_n[i],
                   "L_over_ellstar": self.L_over_ellstar[i],
                   "a_over_n": self.a_over_n[i]}

    def to_dict(self) -> dict:
        return asdict(self)


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def lemma1_report(dist: OffspringDistribution, n_values) -> SequenceTable:
    """Tabulate the sequences and the three trend diagnostics."""
    ns = [int(n) for n in n_values]
    if ns != sorted(ns) or len(ns) == 0:
        raise ValueError("n_values must be sorted and nonempty")
    a = [scaling_a(dist, n) for n in ns]
    b = [centering_b(dist, n, an) for n, an in zip(ns, a)]
    es_n = [ell_star(dist, n) for n in ns]
    es_a = [ell_star(dist, an) for an in a]
    ratio = [slowly_varying_L(dist, n) / e if e > 0 else math.nan for n, e in zip(ns, es_n)]
    a_over = [an / n for an, n in zip(a, ns)]
    finite = dist.support_max is not None and dist.support_max < ns[-1]
    if finite:
        flags = {"L_over_ellstar_decreasing": None, "ell_star_decreasing": None,
                 "a_over_n_decreasing": None}
    else:
        flags = {"L_over_ellstar_decreasing": _strictly_decreasing(ratio),
                 "ell_star_decreasing": _strictly_decreasing(es_n),
                 "a_over_n_decreasing": _strictly_decreasing(a_over)}
    return SequenceTable(ns, a, b, es_a, es_n, ratio, a_over, 1.0 - dist.mean,
                         finite, flags)


def max_jump_probability(dist: OffspringDistribution, n: int, a: int) -> float:
    """``P(max_{i<=n} X_i >= a) = 1 - (1 - tail(a+1))^n`` for i.i.d. jumps."""
    return -math.expm1(n * math.log1p(-dist.tail(a + 1)))


def condensation_bias(dist: OffspringDistribution, n: int) -> float:
    """``ell_star(a_n)/(1-m)``, the first-order finite-n offset of ``Delta/(n(1-m))``.

    ``Delta - 1`` is minus the sum of the other jumps, which is centred near
    ``b_n = -n(1-m) - n ell_star(a_n)``, so the offset is an excess above 1.
    """
    return ell_star(dist, scaling_a(dist, n)) / (1.0 - dist.mean)


def decades(lo_exp: int, hi_exp: int) -> np.ndarray:
    return np.array([10 ** e for e in range(lo_exp, hi_exp + 1)], dtype=np.int64)
