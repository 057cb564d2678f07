"""Jump walks, bridges, the Vervaat rotation and the one-big-jump split.

Jumps are ``X = xi - 1`` with ``xi`` an offspring count, so ``X >= -1``.  A
bridge is a jump vector with total ``-1``; rotating it at its first minimum
gives the Lukasiewicz path of a plane tree with ``n`` vertices.

Two exact bridge samplers are provided.  ``"rejection"`` draws i.i.d. vectors
until the sum is ``-1``.  ``"split"`` separates jumps at a level ``K``: the
number and values of the large jumps are drawn by rejection against the exact
law of the sum of the small ones (an FFT convolution power), and the small
jumps are then drawn given their sum through an exponentially tilted
multinomial, accepted when the sum matches.  Both return draws from the exact
conditional law; the split sampler needs about ``1e3`` cheap proposals per
bridge where plain rejection needs about ``1/P(W_n = -1)`` full vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import binom

from .offspring import OffspringDistribution

DEFAULT_BUDGET = 10 ** 9


class BridgeBudgetExceeded(RuntimeError):
    """Raised when a bridge sampler runs out of its draw budget; retryable."""

    def __init__(self, tries: int, budget: int):
        super().__init__(f"bridge sampler used {tries} draws without success (budget {budget})")
        self.tries = tries
        self.budget = budget


@dataclass
class JumpVector:
    increments: np.ndarray
    bridge: bool = False
    approximate: bool = False
    tries: int = 0

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=np.int64)
        if self.increments.size and self.increments.min() < -1:
            raise ValueError("increments must be >= -1")
        if self.bridge and int(self.increments.sum()) != -1:
            raise ValueError("bridge increments must sum to -1")

    def __len__(self) -> int:
        return len(self.increments)

    @property
    def walk(self) -> np.ndarray:
        """Prefix sums ``W_1, ..., W_n``."""
        return np.cumsum(self.increments)


@dataclass
class BigJumpSplit:
    v_n: int  # 1-based index of the first maximal jump
    max_jump: int
    rest: JumpVector


def sample_iid_jumps(dist: OffspringDistribution, n: int, rng: np.random.Generator) -> JumpVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    return JumpVector(dist.sample_jumps(rng, n))


# ---------------------------------------------------------------------------
# exact samplers

def _rejection_bridge(dist, n, rng, budget):
    # budget and tries count whole i.i.d. vectors of length n
    tries = 0
    batch = max(1, min(1 << 16, (1 << 22) // n))
    while tries < budget:
        b = min(batch, budget - tries)
        x = dist.sample_jumps(rng, (b, n))
        hit = np.flatnonzero(x.sum(axis=1) == -1)
        if hit.size:
            tries += int(hit[0]) + 1
            return JumpVector(x[hit[0]], bridge=True, tries=tries)
        tries += b
        batch = min(2 * batch, max(1, (1 << 24) // n))
    raise BridgeBudgetExceeded(tries, budget)


class SplitBridgeSampler:
    """Exact bridge sampler for a fixed ``(dist, n)``; caches convolution tables."""

    def __init__(self, dist: OffspringDistribution, n: int, level: int | None = None):
        self.dist = dist
        self.n = n
        if level is None:
            level = int(min(64, max(4, (1 << 21) // n - 1)))
        if dist.support_max is not None:
            level = min(level, dist.support_max - 1)
        self.level = max(level, 0)
        K = self.level
        small = dist.pmf_array(np.arange(K + 2))  # P(X = j) for j = -1..K
        self.small_law = small / math.fsum(small)
        self.tau = dist.tail(K + 2)
        self._values = np.arange(-1, K + 1)
        self._conv = {}
        self._bmax = int(n * self.tau + 10.0 * math.sqrt(n * self.tau) + 10.0)
        self._bmax = min(self._bmax, n)
        self._m_cap = 1.0
        if self.tau > 0:
            self._init_tables()
        if self.tau > 0:
            b = np.arange(n + 1)
            logw = binom.logpmf(b, n, self.tau)
            bound = np.where(b <= self._bmax, self._m_cap, 1.0)
            w = np.exp(logw - logw.max()) * bound
            self._b_cdf = np.cumsum(w / w.sum())
            self._b_cdf[-1] = 1.0
        self._tilt_cache = {}

    # --- sums of small jumps -----------------------------------------------
    def _fft_power(self, k: int) -> np.ndarray:
        """Full law of ``k`` small jumps shifted by ``+k`` (support ``0..k(K+1)``)."""
        size = k * (self.level + 1) + 1
        nfft = 1 << int(math.ceil(math.log2(max(size, 2))))
        full = np.fft.irfft(np.fft.rfft(self.small_law, nfft) ** k, nfft)[:size]
        return np.clip(full, 0.0, None)

    def _conv_neg(self, k: int) -> np.ndarray:
        """``P(sum of k small jumps = t)`` stored at index ``t + k``, ``t < 0``."""
        arr = self._conv.get(k)
        if arr is not None:
            return arr
        k_lo = self.n - self._bmax
        if k < k_lo or k_lo <= 0:
            arr = self._fft_power(k)[: max(k, 0)]
        else:
            base = max(j for j in self._conv if k_lo <= j <= k)
            arr = self._conv[base]
            for j in range(base + 1, k + 1):
                # sums below n only need the first n entries of the previous law
                arr = np.convolve(arr, self.small_law)[: self.n]
                self._conv[j] = arr
        self._conv[k] = arr
        return arr

    def _init_tables(self):
        k_lo = self.n - self._bmax
        if k_lo <= 0:
            self._m_cap = 1.0
            return
        full = self._fft_power(k_lo)
        # the peak of a convolution power is nonincreasing in k
        self._m_cap = float(full.max()) * (1.0 + 1e-9)
        head = np.zeros(self.n)
        head[: min(self.n, len(full))] = full[: self.n]
        self._conv[k_lo] = head

    def _p_small_sum(self, k: int, t: int) -> float:
        if k == 0:
            return 1.0 if t == 0 else 0.0
        if t < -k or t >= 0:
            return 0.0
        return float(self._conv_neg(k)[t + k])

    # --- stage 1: number and values of big jumps ---------------------------
    def _draw_big(self, rng, count: int) -> np.ndarray:
        v = self.tau * (1.0 - rng.random(count))
        return self.dist.inverse_survival(v) - 1

    def _stage1(self, rng, budget):
        n = self.n
        if self.tau <= 0:
            return 0, np.zeros(0, dtype=np.int64), 1
        tries = 0
        batch = 256
        while tries < budget:
            bs = np.searchsorted(self._b_cdf, rng.random(batch), side="right")
            total = int(bs.sum())
            big = self._draw_big(rng, total)
            offs = np.concatenate(([0], np.cumsum(bs)))
            sums = np.add.reduceat(np.concatenate((big, [0])), offs[:-1]) if total else np.zeros(batch, dtype=np.int64)
            sums = np.where(bs > 0, sums, 0)
            t = -1 - sums
            k = n - bs
            u = rng.random(batch)
            feasible = t >= -k
            accepted = -1
            for i in np.flatnonzero(feasible):
                bound = self._m_cap if bs[i] <= self._bmax else 1.0
                if u[i] * bound < self._p_small_sum(int(k[i]), int(t[i])):
                    accepted = int(i)
                    break
            if accepted >= 0:
                tries += accepted + 1
                y = big[offs[accepted]:offs[accepted + 1]]
                return int(bs[accepted]), y.astype(np.int64), tries
            tries += batch
            batch = min(2 * batch, 1 << 16)
        raise BridgeBudgetExceeded(tries, budget)

    # --- stage 2: small jumps given their sum --------------------------------
    def _tilted(self, k: int, t: int) -> np.ndarray:
        key = (k, t)
        p = self._tilt_cache.get(key)
        if p is None:
            vals = self._values.astype(float)
            logp = np.log(np.where(self.small_law > 0, self.small_law, 1e-300))
            logp[self.small_law == 0] = -np.inf
            target = t / k

            def mean_gap(th):
                w = logp + th * vals
                w = np.exp(w - w.max())
                return float(np.dot(w, vals) / w.sum()) - target

            lo, hi = -1.0, 1.0
            while mean_gap(lo) > 0:
                lo *= 2.0
            while mean_gap(hi) < 0:
                hi *= 2.0
            th = optimize.brentq(mean_gap, lo, hi, xtol=1e-14)
            w = logp + th * vals
            p = np.exp(w - w.max())
            p /= p.sum()
            if len(self._tilt_cache) > 4096:
                self._tilt_cache.clear()
            self._tilt_cache[key] = p
        return p

    def _stage2(self, rng, k: int, t: int) -> np.ndarray:
        K = self.level
        if k == 0:
            return np.zeros(0, dtype=np.int64)
        if t == -k:
            return np.full(k, -1, dtype=np.int64)
        if t == k * K:
            return np.full(k, K, dtype=np.int64)
        p = self._tilted(k, t)
        vals = self._values
        batch = 64
        while True:
            counts = rng.multinomial(k, p, size=batch)
            hit = np.flatnonzero(counts @ vals == t)
            if hit.size:
                return np.repeat(vals, counts[hit[0]])
            batch = min(2 * batch, 1 << 14)

    def sample(self, rng: np.random.Generator, budget: int = DEFAULT_BUDGET) -> JumpVector:
        b, y, tries = self._stage1(rng, budget)
        k = self.n - b
        t = -1 - int(y.sum())
        small = self._stage2(rng, k, t)
        x = np.concatenate((small, y))
        return JumpVector(rng.permutation(x), bridge=True, tries=tries)


def _split_sampler(dist: OffspringDistribution, n: int) -> SplitBridgeSampler:
    cache = dist.__dict__.setdefault("_bridge_samplers", {})
    s = cache.get(n)
    if s is None:
        if len(cache) > 8:
            cache.clear()
        s = cache[n] = SplitBridgeSampler(dist, n)
    return s


def sample_bridge_exact(dist: OffspringDistribution, n: int, rng: np.random.Generator,
                        max_tries: int = DEFAULT_BUDGET, method: str = "auto") -> JumpVector:
    """Exact draw of ``(X_1..X_n)`` given ``X_1 + ... + X_n = -1``.

    ``method`` is ``"rejection"``, ``"split"`` or ``"auto"`` (rejection for
    ``n <= 16``).  ``tries`` counts i.i.d. vectors for rejection and stage-one
    proposals for the split sampler.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return JumpVector(np.array([-1]), bridge=True, tries=1)
    if method == "auto":
        method = "rejection" if n <= 16 else "split"
    if method == "rejection":
        return _rejection_bridge(dist, n, rng, max_tries)
    if method == "split":
        return _split_sampler(dist, n).sample(rng, max_tries)
    raise ValueError(f"unknown bridge method {method!r}")


def sample_bridges_rejection(dist: OffspringDistribution, n: int, count: int,
                             rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """``count`` exact bridges by vectorised rejection; returns (array, vectors drawn)."""
    out = []
    got = 0
    drawn = 0
    batch = max(1024, min(1 << 20, (1 << 24) // n))
    while got < count:
        x = dist.sample_jumps(rng, (batch, n))
        drawn += batch
        keep = x[x.sum(axis=1) == -1]
        out.append(keep[: count - got])
        got += len(out[-1])
    return np.concatenate(out), drawn


def sample_bridge_planted(dist: OffspringDistribution, n: int, rng: np.random.Generator,
                          max_rounds: int = 10 ** 6) -> JumpVector:
    """APPROXIMATE bridge: ``n-1`` i.i.d. jumps plus a balancing jump.

    The balancing jump ``-1 - sum`` is inserted at a uniform position; rounds
    where it would be below ``-1`` are redrawn.  ``tries`` counts rounds.
    """
    if n < 2:
        raise ValueError("planted sampler needs n >= 2")
    for r in range(1, max_rounds + 1):
        x = dist.sample_jumps(rng, n - 1)
        j = -1 - int(x.sum())
        if j >= -1:
            pos = int(rng.integers(n))
            return JumpVector(np.insert(x, pos, j), bridge=True, approximate=True, tries=r)
    raise BridgeBudgetExceeded(max_rounds, max_rounds)


def sample_planted_batch(dist: OffspringDistribution, n: int, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Vectorised planted sampler; returns a ``(count, n)`` array (APPROXIMATE)."""
    out = []
    got = 0
    batch = max(256, min(1 << 18, (1 << 23) // n))
    while got < count:
        x = dist.sample_jumps(rng, (batch, n - 1))
        j = -1 - x.sum(axis=1)
        ok = j >= -1
        x, j = x[ok], j[ok]
        pos = rng.integers(n, size=len(j))
        full = np.empty((len(j), n), dtype=np.int64)
        cols = np.arange(n)[None, :]
        src = cols - (cols > pos[:, None])
        src = np.minimum(src, n - 2)
        full[:] = np.take_along_axis(x, src, axis=1)
        full[np.arange(len(j)), pos] = j
        out.append(full[: count - got])
        got += len(out[-1])
    return np.concatenate(out)


# ---------------------------------------------------------------------------

def vervaat(bridge) -> np.ndarray:
    """Rotate a bridge at the first minimum of its prefix sums."""
    x = np.asarray(bridge.increments if isinstance(bridge, JumpVector) else bridge, dtype=np.int64)
    if x.size == 0 or int(x.sum()) != -1:
        raise ValueError("vervaat needs a bridge (increments summing to -1)")
    j = int(np.argmin(np.cumsum(x))) + 1
    return np.concatenate((x[j:], x[:j]))


def vervaat_batch(x: np.ndarray) -> np.ndarray:
    """Row-wise Vervaat rotation of a ``(count, n)`` array of bridges."""
    x = np.asarray(x, dtype=np.int64)
    if np.any(x.sum(axis=1) != -1):
        raise ValueError("every row must sum to -1")
    n = x.shape[1]
    j = np.argmin(np.cumsum(x, axis=1), axis=1) + 1
    idx = (np.arange(n)[None, :] + j[:, None]) % n
    return np.take_along_axis(x, idx, axis=1)


def is_excursion(x) -> bool:
    w = np.cumsum(np.asarray(x, dtype=np.int64))
    return w.size > 0 and w[-1] == -1 and bool(np.all(w[:-1] >= 0))


def big_jump_split(jumps) -> BigJumpSplit:
    x = np.asarray(jumps.increments if isinstance(jumps, JumpVector) else jumps, dtype=np.int64)
    if x.size == 0:
        raise ValueError("empty jump vector")
    i = int(np.argmax(x))
    return BigJumpSplit(i + 1, int(x[i]), JumpVector(np.delete(x, i)))


def bridge_probability(dist: OffspringDistribution, n: int, cap: int | None = None) -> float:
    """``P(W_n = -1)`` by convolution; exact for jumps bounded by ``cap``.

    A bridge of length ``n`` has every jump ``<= n - 2``, so the default cap
    loses nothing.
    """
    cap = n - 2 if cap is None else cap
    p = dist.pmf_array(np.arange(cap + 2))
    acc = np.array([1.0])
    for _ in range(n):
        acc = np.convolve(acc, p)[: n]
    # shifted sum s = t + n, t = -1
    return float(acc[n - 1]) if len(acc) >= n else 0.0

