"""Offspring distributions with exact numeric access.

Two concrete families are provided:

* :class:`TableDistribution` -- finite support, every quantity is a finite sum.
* :class:`CauchyFamily` -- ``mu_k = theta * c / (k^2 log(k+e)^(1+beta))`` for
  ``k >= 1``, the canonical subcritical law in the domain of attraction of a
  totally asymmetric Cauchy law.  Sums over ``k`` are split into an explicit
  head ``k < HEAD`` and an Euler-Maclaurin tail whose integral is evaluated in
  ``t = log x`` with composite Gauss-Legendre quadrature.

Conventions used throughout the package: ``tail(k) = mu([k, inf))``,
``moment_tail(k) = sum_{j>=k} j mu_j`` (so ``moment_tail(1)`` is the mean and,
with ``L(k) = k^2 mu_k``, ``moment_tail(n)`` is the auxiliary slowly varying
function ``ell_star(n)``), and ``ell(q)`` is the function with
``1 - G(1-q) = q (m - ell(q))``.

Sampling tables are grown lazily and are not locked: share an instance between
threads only if a single thread can trigger growth, otherwise give every
worker its own copy (the harness uses one process per worker).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import gl_nodes, h_func, log_e_shift, one_minus_lambda_ratio, psi_log

HEAD = 4096
_TABLE_START = 1 << 14
_TABLE_MAX = 1 << 24


class OffspringDistribution:
    """Common interface and the inverse-survival sampler."""

    family = "abstract"
    mean: float
    mu0: float
    support_max: int | None = None
    family_meta: dict

    # --- numeric access (overridden) -------------------------------------
    def pmf(self, k: int) -> float:
        raise NotImplementedError

    def pmf_array(self, ks) -> np.ndarray:
        raise NotImplementedError

    def tail(self, k: int) -> float:
        raise NotImplementedError

    def moment_tail(self, k: int) -> float:
        raise NotImplementedError

    def one_minus_gen(self, q: float) -> float:
        raise NotImplementedError

    def ell(self, q: float) -> float:
        raise NotImplementedError

    def ell_log(self, log_q: float) -> float:
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError

    # --- shared -----------------------------------------------------------
    def gen_fn(self, s: float) -> float:
        """Probability generating function ``G(s) = sum_k mu_k s^k``."""
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"generating function argument {s} outside [0, 1]")
        return 1.0 - self.one_minus_gen(1.0 - s)

    def jump_pmf(self, j: int) -> float:
        """``P(X = j) = mu_{j+1}`` for the jump variable ``X``."""
        return self.pmf(j + 1) if j >= -1 else 0.0

    def _check_q(self, q: float) -> None:
        if not 0.0 < q <= 1.0:
            raise ValueError(f"argument {q} outside (0, 1]")

    # --- sampling ---------------------------------------------------------
    def _survival_block(self, size: int) -> np.ndarray:
        """Return ``[tail(0), ..., tail(size)]``."""
        raise NotImplementedError

    def _table(self, size: int | None = None) -> np.ndarray:
        surv = getattr(self, "_surv", None)
        if surv is None or (size is not None and len(surv) - 1 < size):
            want = _TABLE_START if surv is None else 2 * (len(surv) - 1)
            if size is not None:
                want = max(want, size)
            if self.support_max is not None:
                want = min(want, self.support_max + 1)
            surv = self._survival_block(want)
            self._surv = surv
        return surv

    def inverse_survival(self, v) -> np.ndarray:
        """Return ``max{k : tail(k) >= v}`` for each ``v`` in ``(0, 1]``.

        If ``v`` is uniform on ``(0, 1]`` the result has law ``mu``.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        surv = self._table()
        out = np.searchsorted(-surv, -v, side="right") - 1
        while self.support_max is None:
            over = out >= len(surv) - 1
            if not np.any(over) or len(surv) - 1 >= _TABLE_MAX:
                break
            surv = self._table(2 * (len(surv) - 1))
            out[over] = np.searchsorted(-surv, -v[over], side="right") - 1
        if self.support_max is None:
            over = np.flatnonzero(out >= len(surv) - 1)
            for i in over:
                out[i] = self._invert_tail(v[i], len(surv) - 1)
        return out.astype(np.int64)

    def _invert_tail(self, v: float, lo: int) -> int:
        hi = 2 * lo
        while self.tail(hi) >= v:
            lo, hi = hi, 2 * hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail(mid) >= v:
                lo = mid
            else:
                hi = mid
        return lo

    def sample(self, rng: np.random.Generator, size=None):
        """Draw offspring counts; returns an int for ``size=None``."""
        n = 1 if size is None else size
        v = 1.0 - rng.random(n)
        out = self.inverse_survival(np.ravel(v)).reshape(np.shape(v))
        return int(out[0]) if size is None else out

    def sample_jumps(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. copies of ``X = xi - 1``."""
        return self.sample(rng, size) - 1

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


class TableDistribution(OffspringDistribution):
    """Finite-support offspring law given by its probability table."""

    family = "table"

    def __init__(self, pmf, family_meta: dict | None = None):
        p = np.asarray(pmf, dtype=float).ravel()
        if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("pmf must be a non-empty table of nonnegative numbers")
        total = math.fsum(p)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {total!r}, not 1")
        nz = np.flatnonzero(p)
        p = p[: nz[-1] + 1] / total
        if p[0] <= 0:
            raise ValueError("mu_0 must be positive")
        self.p = p
        self.support_max = len(p) - 1
        self.mu0 = float(p[0])
        k = np.arange(len(p), dtype=float)
        self.mean = math.fsum(k * p)
        self._suffix = np.array([math.fsum(p[i:]) for i in range(len(p))] + [0.0])
        self._suffix[0] = 1.0
        km = k * p
        self._msuffix = np.array([math.fsum(km[i:]) for i in range(len(p))] + [0.0])
        self.family_meta = dict(family_meta or {})

    def pmf(self, k: int) -> float:
        return float(self.p[k]) if 0 <= k < len(self.p) else 0.0

    def pmf_array(self, ks) -> np.ndarray:
        ks = np.asarray(ks)
        out = np.zeros(ks.shape)
        ok = (ks >= 0) & (ks < len(self.p))
        out[ok] = self.p[ks[ok]]
        return out

    def tail(self, k: int) -> float:
        if k <= 0:
            return 1.0
        return float(self._suffix[k]) if k < len(self._suffix) else 0.0

    def moment_tail(self, k: int) -> float:
        k = max(k, 0)
        return float(self._msuffix[k]) if k < len(self._msuffix) else 0.0

    def one_minus_gen(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"argument {q} outside [0, 1]")
        if q == 0.0:
            return 0.0
        if q == 1.0:
            return 1.0 - self.mu0
        lam = -math.log1p(-q)
        k = np.arange(1, len(self.p))
        return math.fsum(self.p[1:] * -np.expm1(-lam * k))

    def ell(self, q: float) -> float:
        self._check_q(q)
        if q == 1.0:
            return self.mean - 1.0 + self.mu0
        if len(self.p) <= 2:
            return 0.0
        lam = -math.log1p(-q)
        k = np.arange(2, len(self.p), dtype=float)
        phi = k * one_minus_lambda_ratio(q) + h_func(lam * k) / q
        return math.fsum(self.p[2:] * phi)

    def ell_log(self, log_q: float) -> float:
        if log_q > -700.0:
            return self.ell(math.exp(log_q))
        k = np.arange(len(self.p), dtype=float)
        return math.exp(log_q) * math.fsum(self.p * k * (k - 1) / 2)

    def _survival_block(self, size: int) -> np.ndarray:
        return self._suffix[: size + 1].copy()

    def to_spec(self) -> dict:
        return {"family": "table", "pmf": [float(x) for x in self.p]}


class CauchyFamily(OffspringDistribution):
    """``mu_k = theta c / (k^2 log(k+e)^(1+beta))`` for ``k >= 1``.

    ``theta`` is solved so that the mean equals ``m``; ``mu_0`` absorbs the
    remaining mass.  ``c_eff = theta * c`` is the tail constant of the law
    actually constructed, ``L(k) = k^2 mu_k = c_eff / log(k+e)^(1+beta)``.
    """

    family = "cauchy"

    def __init__(self, beta: float, c: float, m: float):
        if not (beta > 0 and c > 0):
            raise ValueError("beta and c must be positive")
        if not 0.0 < m < 1.0:
            raise ValueError(f"mean {m} must lie in (0, 1)")
        self.beta = float(beta)
        self.c = float(c)
        self.power = 1.0 + self.beta
        a0, a1 = self._base_sums()
        self.base_mass = a0
        self.base_mean = a1
        theta = m / a1
        if theta * a0 > 1.0:
            raise ValueError(
                f"mean {m} infeasible for beta={beta}, c={c}: "
                f"maximal feasible mean is {a1 / a0:.12g}")
        self.theta = theta
        self.c_eff = theta * self.c
        self.mean = float(m)
        self.mu0 = 1.0 - theta * a0
        k = np.arange(HEAD, dtype=float)
        head = np.empty(HEAD)
        head[0] = self.mu0
        head[1:] = self._density(k[1:])
        self.head = head
        self._head_suffix = np.cumsum(head[::-1].astype(np.longdouble))[::-1]
        self._head_msuffix = np.cumsum((k * head)[::-1].astype(np.longdouble))[::-1]
        self._tail_head = self._far_tail(HEAD)
        self._mtail_head = self._far_moment(HEAD)
        self.family_meta = {"family": "cauchy", "beta": self.beta, "c": self.c,
                            "theta": self.theta, "c_eff": self.c_eff}
        self._fast = None

    # ----- building blocks ------------------------------------------------
    def _base_sums(self) -> tuple[float, float]:
        """``sum_{k>=1} c/(k^2 lg^p)`` and ``sum_{k>=1} c/(k lg^p)``."""
        k = np.arange(1, HEAD, dtype=float)
        lgp = np.log(k + math.e) ** self.power
        a0 = math.fsum(self.c / (k * k * lgp))
        a1 = math.fsum(self.c / (k * lgp))

        def f0(x):
            return self.c / (x * x * np.log(x + math.e) ** self.power)

        def f1(x):
            return x * f0(x)

        t0 = math.log(HEAD)
        nodes, w = gl_nodes(t0, t0 + 60.0)
        lg = log_e_shift(nodes)
        i0 = math.fsum(w * self.c * np.exp(-nodes) / lg ** self.power)
        tend = t0 + 60.0
        i1 = math.fsum(w * self.c / lg ** self.power) + self.c * tend ** (-self.beta) / self.beta
        a0 += _em_correction(f0, HEAD) + i0
        a1 += _em_correction(f1, HEAD) + i1
        return a0, a1

    def _density(self, x):
        """Smooth extension ``x -> c_eff / (x^2 log(x+e)^p)`` of the pmf."""
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return self.c_eff / (x * x) / np.log(x + math.e) ** self.power

    def _t_integrand_tail(self, t):
        return self.c_eff * np.exp(-t) / log_e_shift(t) ** self.power

    def _far_tail(self, k: float) -> float:
        t0 = math.log(k)
        nodes, w = gl_nodes(t0, t0 + 50.0)
        integral = math.fsum(w * self._t_integrand_tail(nodes))
        return integral + _em_correction(self._density, k)

    def _far_moment(self, k: float) -> float:
        t0 = math.log(k)
        tend = max(t0, 1.0) + 60.0
        nodes, w = gl_nodes(t0, tend)
        integral = math.fsum(w * self.c_eff / log_e_shift(nodes) ** self.power)
        integral += self.c_eff * tend ** (-self.beta) / self.beta
        return integral + _em_correction(lambda x: x * self._density(x), k)

    # ----- public numeric access -------------------------------------------
    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k < HEAD:
            return float(self.head[k])
        return float(self._density(float(k)))

    def pmf_array(self, ks) -> np.ndarray:
        ks = np.asarray(ks)
        out = np.zeros(ks.shape)
        pos = ks >= 1
        out[pos] = self._density(ks[pos].astype(float))
        out[ks == 0] = self.mu0
        return out

    def tail(self, k: int) -> float:
        if k <= 0:
            return 1.0
        if k < HEAD:
            return float(self._head_suffix[k]) + self._tail_head
        return self._far_tail(float(k))

    def moment_tail(self, k: int) -> float:
        k = max(k, 1)
        if k < HEAD:
            return float(self._head_msuffix[k]) + self._mtail_head
        return self._far_moment(float(k))

    def one_minus_gen(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"argument {q} outside [0, 1]")
        if q == 0.0:
            return 0.0
        if q == 1.0:
            return 1.0 - self.mu0
        lam = -math.log1p(-q)
        k = np.arange(1, HEAD, dtype=float)
        head = math.fsum(self.head[1:] * -np.expm1(-lam * k))
        log_lam = math.log(lam)
        t0 = math.log(HEAD)
        nodes, w = gl_nodes(t0, max(t0, -log_lam) + 50.0)
        weight = -np.expm1(-np.exp(np.minimum(nodes + log_lam, 700.0)))
        integral = math.fsum(w * self._t_integrand_tail(nodes) * weight)
        corr = _em_correction(lambda x: self._density(x) * -np.expm1(-lam * x), HEAD)
        return head + integral + corr

    def gen_fn(self, s: float) -> float:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"generating function argument {s} outside [0, 1]")
        if s <= 0.5:
            k = np.arange(1, 1100, dtype=float)
            return self.mu0 + math.fsum(self.head[1:1100] * s ** k)
        return 1.0 - self.one_minus_gen(1.0 - s)

    def ell(self, q: float) -> float:
        """``ell(q) = sum_k mu_k (k - (1-(1-q)^k)/q)``, every term nonnegative."""
        self._check_q(q)
        if q == 1.0:
            return self.mean - 1.0 + self.mu0
        lam = -math.log1p(-q)
        log_lam = math.log(lam)
        k = np.arange(1, HEAD, dtype=float)
        head = math.fsum(self.head[1:] * h_func(lam * k)) / q
        drift = self.mean * one_minus_lambda_ratio(q)
        v0 = max(math.log(HEAD) + log_lam, -50.0)
        vend = max(v0, 45.0)
        nodes, w = gl_nodes(v0, vend)
        lg = log_e_shift(nodes - log_lam)
        integral = math.fsum(w * psi_log(nodes) / lg ** self.power)
        integral += (vend - log_lam) ** (-self.beta) / self.beta
        integral *= self.c_eff * lam / q
        corr = _em_correction(lambda x: self._density(x) * h_func(lam * x) / q, HEAD)
        return drift + head + corr + integral

    def ell_log(self, log_q: float) -> float:
        """``ell`` at ``q = exp(log_q)``; usable far below double underflow."""
        if log_q > 0:
            raise ValueError("log_q must be <= 0")
        if log_q >= -60.0:
            return self.ell(math.exp(log_q))
        big_l = -log_q
        fast = self._fast_tables()
        if big_l >= 1500.0:
            x = 1.0 / big_l
            acc = 0.0
            for coef in fast["series"][::-1]:
                acc = acc * x + coef
            integral = acc * big_l ** (-self.power)
        else:
            lg = log_e_shift(fast["nodes"] + big_l)
            integral = math.fsum(fast["wpsi"] / lg ** self.power)
        integral += (45.0 + big_l) ** (-self.beta) / self.beta
        return self.c_eff * integral

    def _fast_tables(self):
        if self._fast is None:
            nodes, w = gl_nodes(-50.0, 45.0)
            wpsi = w * psi_log(nodes)
            series = []
            binom = 1.0
            for j in range(18):
                series.append(binom * math.fsum(wpsi * nodes ** j))
                binom *= (-self.power - j) / (j + 1)
            self._fast = {"nodes": nodes, "wpsi": wpsi, "series": np.array(series)}
        return self._fast

    def _survival_block(self, size: int) -> np.ndarray:
        # fixed blocks anchored on the analytic tail, so entries never depend
        # on how far the table has grown
        size = -(-size // HEAD) * HEAD
        old = getattr(self, "_surv", None)
        start = 0 if old is None else len(old) - 1
        parts = [] if old is None else [old[:-1]]
        for lo in range(start, size, HEAD):
            if lo == 0:
                block = self.head
            else:
                block = self._density(np.arange(lo, lo + HEAD, dtype=float))
            anchor = self.tail(lo + HEAD)
            suffix = np.cumsum(block[::-1].astype(np.longdouble))[::-1] + anchor
            parts.append(suffix.astype(float))
        surv = np.concatenate(parts + [[self.tail(size)]])
        surv[0] = 1.0
        return surv

    def to_spec(self) -> dict:
        return {"family": "cauchy", "beta": self.beta, "c": self.c, "m": self.mean}


def _em_correction(f, k: float) -> float:
    """Euler-Maclaurin boundary terms ``f(k)/2 - f'(k)/12`` (sum starts at k)."""
    k = float(k)
    f0, fp, fm = (float(f(np.array(x))) for x in (k, k + 1.0, k - 1.0))
    return 0.5 * f0 - (fp - fm) / 24.0


# ---------------------------------------------------------------------------
def make_cauchy_family(beta: float, c: float, m_target: float) -> CauchyFamily:
    """Build the canonical Cauchy-type law with mean ``m_target``."""
    return CauchyFamily(beta, c, m_target)


def pmf(dist: OffspringDistribution, k: int) -> float:
    return dist.pmf(k)


def tail(dist: OffspringDistribution, k: int) -> float:
    return dist.tail(k)


def gen_fn(dist: OffspringDistribution, s: float) -> float:
    return dist.gen_fn(s)


def sample_offspring(dist: OffspringDistribution, rng: np.random.Generator) -> int:
    return dist.sample(rng)


def tilt(dist: OffspringDistribution, lam: float) -> TableDistribution | OffspringDistribution:
    """Exponential tilt ``mu_k lam^k / G(lam)``.

    Tilting leaves the law of the size-conditioned tree unchanged.  Infinite
    support laws are tabulated up to the index where ``lam^k mu_k`` drops below
    ``1e-18 G(lam)``; the truncated mass is recorded in ``family_meta``.
    """
    if not lam > 0:
        raise ValueError("tilt parameter must be positive")
    if lam == 1.0:
        return dist
    if dist.support_max is None:
        if lam > 1.0:
            raise ValueError(f"tilt parameter {lam} beyond the radius of convergence 1")
        kappa = -math.log(lam)
        kmax = int(math.ceil(41.5 / kappa)) + 2
        if kmax > (1 << 22):
            raise ValueError(f"tilt parameter {lam} too close to 1 to tabulate")
        g = dist.gen_fn(lam)
        k = np.arange(kmax)
        w = dist.pmf_array(k) * np.exp(k * math.log(lam))
        dropped = max(0.0, 1.0 - math.fsum(w) / g)
        meta = {"tilted_from": dist.to_spec(), "lambda": lam, "truncated_mass": dropped}
        return TableDistribution(w / math.fsum(w), family_meta=meta)
    k = np.arange(len(dist.p))
    w = dist.p * np.exp(k * math.log(lam))
    meta = {"tilted_from": dist.to_spec(), "lambda": lam, "truncated_mass": 0.0}
    return TableDistribution(w / math.fsum(w), family_meta=meta)


def tilted_mean(dist: OffspringDistribution, lam: float) -> float:
    """Mean ``lam G'(lam) / G(lam)`` of the tilted law, from the untilted one."""
    if dist.support_max is not None:
        k = np.arange(len(dist.p))
        w = dist.p * lam ** k
        return math.fsum(k * w) / math.fsum(w)
    kappa = -math.log(lam)
    kmax = int(math.ceil(45.0 / kappa)) + 2
    k = np.arange(kmax)
    w = dist.pmf_array(k) * np.exp(k * math.log(lam))
    return math.fsum(k * w) / dist.gen_fn(lam)


@dataclass
class NlognReport:
    verdict: str  # "convergent", "divergent" or "unknown"
    detail: str
    partial_sums: dict = field(default_factory=dict)


def nlogn_classification(dist: OffspringDistribution) -> NlognReport:
    """Decide whether ``sum (n log n) mu_n`` is finite."""
    if dist.support_max is not None:
        return NlognReport("convergent", "finite support")
    if isinstance(dist, CauchyFamily):
        verdict = "convergent" if dist.beta > 1 else "divergent"
        return NlognReport(verdict, f"n log n mu_n ~ c_eff/(n log(n)^{dist.beta:g}); "
                                    "summable iff beta > 1")
    sums = {}
    for e in (3, 4, 5, 6):
        k = np.arange(1, 10 ** e)
        sums[10 ** e] = math.fsum(k * np.log(k) * dist.pmf_array(k))
    return NlognReport("unknown", "no analytic tail metadata", sums)


def from_spec(spec: dict) -> OffspringDistribution:
    """Build a distribution from its JSON description."""
    fam = spec.get("family")
    if fam == "cauchy":
        return CauchyFamily(spec["beta"], spec["c"], spec["m"])
    if fam == "table":
        return TableDistribution(spec["pmf"])
    if fam == "tilted":
        return tilt(from_spec(spec["base"]), spec["lambda"])
    raise ValueError(f"unknown distribution family {fam!r}")
