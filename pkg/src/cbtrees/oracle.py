"""Exact laws for small instances, used as ground truth.

Trees are enumerated as Lukasiewicz outdegree sequences; bridge laws are
enumerated over jump vectors in ``[-1, cap]^n``; i.i.d. sum and maximum laws
come from discrete convolution.  Statistic values are keyed by plain Python
ints or tuples of ints.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .offspring import OffspringDistribution
from .tree import PlaneTree, stats as tree_stats

MAX_TREE_SIZE = 12
MAX_STATES = 10 ** 8
OVERFLOW = "overflow"


@dataclass
class ExactLaw:
    support: dict  # encoding -> probability
    total: float
    truncation_error: float = 0.0
    meta: dict = field(default_factory=dict)

    def normalized(self) -> "ExactLaw":
        if self.total <= 0:
            raise ValueError("zero conditioning mass")
        sup = {k: v / self.total for k, v in self.support.items()}
        return ExactLaw(sup, 1.0, self.truncation_error / self.total, dict(self.meta))

    def prob(self, key) -> float:
        return self.support.get(key, 0.0)

    def items(self):
        return sorted(self.support.items(), key=lambda kv: _sort_key(kv[0]))

    def __len__(self) -> int:
        return len(self.support)

    def to_json(self) -> dict:
        return {"total": self.total, "truncation_error": self.truncation_error,
                "meta": self.meta,
                "support": [[_jsonable(k), v] for k, v in self.items()]}


def _sort_key(k):
    if isinstance(k, str):
        return (1, (), k)
    return (0, k if isinstance(k, tuple) else (k,), "")


def _jsonable(k):
    return list(k) if isinstance(k, tuple) else k


def exact_tv(law_a: ExactLaw, law_b: ExactLaw) -> float:
    """Half the l1 distance over the union of supports."""
    keys = set(law_a.support) | set(law_b.support)
    return 0.5 * math.fsum(abs(law_a.prob(k) - law_b.prob(k)) for k in keys)


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


# ---------------------------------------------------------------------------
# trees

def _outdegree_sequences(n: int, cap: int):
    """All Lukasiewicz outdegree sequences of length n with entries <= cap."""
    out = []
    seq = [0] * n

    def rec(i, slots):
        # slots = open child slots before placing vertex i
        rem = n - i
        if rem == 0:
            if slots == 0:
                out.append(tuple(seq))
            return
        for k in range(0, cap + 1):
            s = slots - 1 + k
            if s < 0 or s > rem - 1 or (s == 0 and rem > 1):
                continue
            seq[i] = k
            rec(i + 1, s)

    rec(0, 1)
    return out


def size_probability(dist: OffspringDistribution, n: int) -> float:
    """``P(|T| = n) = P(W_n = -1) / n`` (cycle lemma)."""
    from .walk import bridge_probability
    return bridge_probability(dist, n) / n


def enumerate_trees(dist: OffspringDistribution, n: int, degree_cap: int | None = None,
                    max_truncation: float | None = None) -> ExactLaw:
    """Every tree with ``n`` vertices and outdegrees ``<= degree_cap`` with weight ``prod mu_k``."""
    if not 1 <= n <= MAX_TREE_SIZE:
        raise ValueError(f"n={n} outside 1..{MAX_TREE_SIZE}")
    cap = n - 1 if degree_cap is None else int(degree_cap)
    p = dist.pmf_array(np.arange(cap + 1))
    support = {}
    for seq in _outdegree_sequences(n, cap):
        support[seq] = math.prod(p[k] for k in seq)
    total = math.fsum(support.values())
    err = max(0.0, size_probability(dist, n) - total) if cap < n - 1 else 0.0
    if max_truncation is not None and err > max_truncation:
        raise ValueError(f"degree cap {cap} leaves truncation error {err:.3e}")
    return ExactLaw(support, total, err, {"n": n, "cap": cap, "object": "tree"})


def _stat_fn(statistic):
    if callable(statistic):
        return statistic
    if statistic in ("delta", "delta2", "h_delta", "height", "star_index", "n"):
        return lambda seq: getattr(tree_stats(PlaneTree(np.array(seq))), statistic)
    if statistic == "identity":
        return lambda seq: tuple(seq)
    raise ValueError(f"unknown statistic {statistic!r}")


def pushforward(law: ExactLaw, fn) -> ExactLaw:
    acc = defaultdict(list)
    for key, w in law.support.items():
        acc[fn(key)].append(w)
    sup = {k: math.fsum(v) for k, v in acc.items()}
    return ExactLaw(sup, law.total, law.truncation_error, dict(law.meta))


def conditioned_law(dist: OffspringDistribution, n: int, statistic="identity",
                    degree_cap: int | None = None) -> ExactLaw:
    """Law of a tree statistic under the size-``n`` conditioning."""
    law = enumerate_trees(dist, n, degree_cap)
    if law.total <= 0:
        raise ValueError("zero conditioning mass")
    out = pushforward(law, _stat_fn(statistic)).normalized()
    out.support = {k: v for k, v in out.support.items() if v > 0}
    return out


# ---------------------------------------------------------------------------
# bridges

def count_bridges(n: int, cap: int) -> int:
    """Number of vectors in ``[-1, cap]^n`` summing to ``-1``."""
    acc = np.zeros(1, dtype=object)
    acc[0] = 1
    ones = np.ones(cap + 2, dtype=object)
    for _ in range(n):
        acc = np.convolve(acc, ones)
    return int(acc[n - 1])


def _bridge_vectors(dist, n, cap):
    if count_bridges(n, cap) > MAX_STATES:
        raise ValueError(f"more than {MAX_STATES} bridge vectors for n={n}, cap={cap}")
    vals = np.arange(-1, cap + 1, dtype=np.int64)
    pj = dist.pmf_array(vals + 1)
    rows = np.zeros((1, 0), dtype=np.int8)
    logw = np.zeros(1)
    sums = np.zeros(1, dtype=np.int64)
    for i in range(n):
        rem = n - i - 1
        new_s = sums[:, None] + vals[None, :]
        ok = (new_s + (-1) * rem <= -1) & (new_s + cap * rem >= -1) & (pj[None, :] > 0)
        r, c = np.nonzero(ok)
        rows = np.concatenate((rows[r], vals[c].astype(np.int8)[:, None]), axis=1)
        logw = logw[r] + np.log(pj[c])
        sums = new_s[r, c]
    return rows.astype(np.int64), np.exp(logw)


def bridge_law(dist: OffspringDistribution, n: int, statistic="identity", cap: int | None = None) -> ExactLaw:
    """Law of a statistic of ``(X_1..X_n)`` given ``W_n = -1`` with jumps in ``[-1, cap]``.

    For ``cap >= n - 2`` nothing is truncated.  ``statistic`` receives a tuple.
    """
    cap = n - 2 if cap is None else int(cap)
    if n == 1:
        return ExactLaw({_vec_stat(statistic)((-1,)): 1.0}, 1.0)
    rows, w = _bridge_vectors(dist, n, max(cap, -1))
    fn = _vec_stat(statistic)
    acc = defaultdict(list)
    for row, wt in zip(map(tuple, rows.tolist()), w):
        acc[fn(row)].append(wt)
    sup = {k: math.fsum(v) for k, v in acc.items()}
    total = math.fsum(sup.values())
    return ExactLaw(sup, total, 0.0, {"n": n, "cap": cap, "object": "bridge"}).normalized()


def demax_law(dist: OffspringDistribution, n: int, statistic="sum", cap: int | None = None) -> ExactLaw:
    """Law of a statistic of the bridge with its first maximal jump removed."""
    fn = _vec_stat(statistic)

    def rest_stat(row):
        i = max(range(len(row)), key=lambda j: (row[j], -j))
        return fn(row[:i] + row[i + 1:])

    return bridge_law(dist, n, rest_stat, cap)


def _vec_stat(statistic):
    if callable(statistic):
        return statistic
    if statistic == "identity":
        return lambda v: tuple(v)
    if statistic == "sum":
        return lambda v: int(sum(v))
    if statistic == "max":
        return lambda v: int(max(v)) if len(v) else -2
    raise ValueError(f"unknown vector statistic {statistic!r}")


def iid_law(dist: OffspringDistribution, length: int, statistic="sum", cap: int = 8) -> ExactLaw:
    """Law of a statistic of ``length`` i.i.d. jumps.

    Outcomes with some jump above ``cap`` are lumped into one ``"overflow"``
    atom, so the law is exact whenever the statistic's values of interest
    only arise from jumps ``<= cap``.
    """
    vals = np.arange(-1, cap + 1)
    pj = dist.pmf_array(vals + 1)
    if statistic == "sum":
        acc = np.array([1.0])
        for _ in range(length):
            acc = np.convolve(acc, pj)
        sup = {int(s - length): float(p) for s, p in enumerate(acc) if p > 0}
    elif statistic == "max":
        cdf = np.cumsum(pj)
        lower = np.concatenate(([0.0], cdf[:-1]))
        sup = {int(v): float(c ** length - lo ** length) for v, c, lo in zip(vals, cdf, lower)}
    else:
        fn = _vec_stat(statistic)
        if (cap + 2) ** length > MAX_STATES:
            raise ValueError("too many i.i.d. states")
        grids = np.stack(np.meshgrid(*([vals] * length), indexing="ij"), -1).reshape(-1, length)
        w = np.prod(pj[grids + 1], axis=1)
        acc = defaultdict(list)
        for row, wt in zip(map(tuple, grids.tolist()), w):
            acc[fn(row)].append(wt)
        sup = {k: math.fsum(v) for k, v in acc.items()}
    covered = math.fsum(sup.values())
    over = max(0.0, 1.0 - covered)
    if over > 0:
        sup[OVERFLOW] = over
    return ExactLaw(sup, 1.0, 0.0, {"length": length, "cap": cap, "object": "iid"})


def _pmf_upto(dist, d):
    return dist.pmf_array(np.arange(d + 2))  # jumps -1..d


def bridge_max_law(dist: OffspringDistribution, n: int) -> ExactLaw:
    """Law of the largest jump of a bridge of length ``n`` (exact; jumps are <= n-2)."""
    if n == 1:
        return ExactLaw({-1: 1.0}, 1.0)
    cum = []
    for d in range(-1, n - 1):
        cum.append(_conv_at(_pmf_upto(dist, d), n, -1))
    cum = np.array(cum)
    z = cum[-1]
    probs = np.diff(np.concatenate(([0.0], cum))) / z
    sup = {int(d): float(p) for d, p in zip(range(-1, n - 1), probs) if p > 0}
    return ExactLaw(sup, 1.0, 0.0, {"n": n, "object": "bridge max", "bridge_probability": z})


def planted_max_law(dist: OffspringDistribution, n: int) -> ExactLaw:
    """Law of the largest jump produced by the planted (approximate) bridge sampler."""
    L = n - 1

    def law_sum(d):
        p = _pmf_upto(dist, d)
        acc = np.array([1.0])
        for _ in range(L):
            acc = np.convolve(acc, p)
        return acc  # index s + L

    full = law_sum(L - 1)
    accept = math.fsum(full[: L + 1])  # S <= 0
    cum = []
    for d in range(-1, n - 1):
        acc = law_sum(d)
        lo, hi = max(-1 - d, -L), 0
        cum.append(math.fsum(acc[lo + L: hi + L + 1]) if lo <= hi else 0.0)
    probs = np.diff(np.concatenate(([0.0], cum))) / accept
    sup = {int(d): float(p) for d, p in zip(range(-1, n - 1), probs) if p > 0}
    return ExactLaw(sup, 1.0, 0.0, {"n": n, "object": "planted max", "acceptance": accept})


def demax_sum_tv(dist: OffspringDistribution, n: int) -> float:
    """Exact TV between the rest sum of a bridge and ``X_1 + ... + X_{n-1}``.

    The rest of a bridge sums to ``-1 - max``, so its law follows from
    :func:`bridge_max_law` without enumerating vectors.  A sum of ``n - 1``
    jumps is ``<= 0`` only if every jump is ``<= n - 2``, so truncating the
    i.i.d. convolution there is exact on the rest sum's support.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    mx = bridge_max_law(dist, n)
    rest = {-1 - d: p for d, p in mx.support.items()}
    p = _pmf_upto(dist, n - 2)
    acc = np.array([1.0])
    for _ in range(n - 1):
        acc = np.convolve(acc, p)[:n]
    iid = {s - (n - 1): float(acc[s]) for s in range(min(n, len(acc)))}
    above = max(0.0, 1.0 - math.fsum(iid.values()))
    keys = set(rest) | set(iid)
    return 0.5 * (math.fsum(abs(rest.get(k, 0.0) - iid.get(k, 0.0)) for k in keys) + above)


def _conv_at(p: np.ndarray, n: int, t: int) -> float:
    acc = np.array([1.0])
    for _ in range(n):
        acc = np.convolve(acc, p)[: n + t + 1]
    idx = t + n
    return float(acc[idx]) if idx < len(acc) else 0.0


def empirical_law(values) -> ExactLaw:
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    total = counts.sum()
    return ExactLaw({int(v): c / total for v, c in zip(vals, counts)}, 1.0)
