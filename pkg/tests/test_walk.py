import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbtrees import asymptotics, oracle
from cbtrees.harness.stats import chi_square_gof, ks_one_sample
from cbtrees.offspring import TableDistribution
from cbtrees.tree import decode
from cbtrees.walk import (BridgeBudgetExceeded, JumpVector, SplitBridgeSampler, big_jump_split,
                          bridge_probability, is_excursion, sample_bridge_exact,
                          sample_bridge_planted, sample_bridges_rejection, sample_iid_jumps,
                          sample_planted_batch, vervaat, vervaat_batch)


# --- JumpVector / iid ---------------------------------------------------------

def test_jump_vector_validation():
    with pytest.raises(ValueError):
        JumpVector([0, -2])
    with pytest.raises(ValueError):
        JumpVector([0, 0], bridge=True)
    jv = JumpVector([1, -1, -1], bridge=True)
    assert jv.walk.tolist() == [1, 0, -1] and len(jv) == 3


def test_iid_binary_support(binary, rng):
    x = sample_iid_jumps(binary, 5, rng)
    assert set(x.increments.tolist()) <= {-1, 0} and len(x) == 5


def test_iid_walk_truncated_mean(cauchy):
    # the jumps have infinite variance, so compare the mean of min(X, K), which
    # has finite variance and exact value m - 1 - (sum_{k>K} (k - K) mu_k)
    rng = np.random.default_rng(11)
    K = 10_000
    x = np.minimum(cauchy.sample_jumps(rng, 10 ** 7), K - 1)
    exact = cauchy.mean - 1.0 - (cauchy.moment_tail(K) - K * cauchy.tail(K))
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - exact) <= 3 * se


def test_iid_max_exceeds_a_n(cauchy):
    rng = np.random.default_rng(12)
    n, reps = 10_000, 1000
    a = asymptotics.scaling_a(cauchy, n)
    mx = cauchy.sample_jumps(rng, (reps, n)).max(axis=1)
    frac = float(np.mean(mx >= a))
    exact = 1.0 - (1.0 - cauchy.tail(a + 1)) ** n
    assert 0.4 <= frac <= 0.9
    assert 0.4 <= exact <= 0.9
    assert abs(frac - exact) <= 4 * math.sqrt(exact * (1 - exact) / reps)


# --- exact bridge samplers ----------------------------------------------------

def test_bridge_n1(cauchy, rng):
    b = sample_bridge_exact(cauchy, 1, rng)
    assert b.increments.tolist() == [-1] and b.bridge


def test_binary_bridge_rotations(binary):
    rng = np.random.default_rng(0)
    counts = {}
    for _ in range(6000):
        v = tuple(sample_bridge_exact(binary, 3, rng).increments.tolist())
        counts[v] = counts.get(v, 0) + 1
    assert set(counts) == {(0, 0, -1), (0, -1, 0), (-1, 0, 0)}
    obs = np.array(list(counts.values()), dtype=float)
    assert chi_square_gof(obs, np.full(3, 2000.0))[1] > 1e-3


def test_rejection_budget(binary, rng):
    # a binary bridge of length 30 has probability 30 / 2^30
    with pytest.raises(BridgeBudgetExceeded) as e:
        sample_bridge_exact(binary, 30, rng, max_tries=5, method="rejection")
    assert e.value.tries == 5 and e.value.budget == 5


def test_unknown_method(cauchy, rng):
    with pytest.raises(ValueError):
        sample_bridge_exact(cauchy, 20, rng, method="magic")


def _delta_chi2(samples_delta, law):
    keys = sorted(law.support)
    probs = np.array([law.prob(k) for k in keys])
    obs = np.array([np.sum(samples_delta == k) for k in keys], dtype=float)
    # merge sparse upper bins so expected counts are >= 5
    exp = probs * len(samples_delta)
    o2, e2, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            o2.append(acc_o)
            e2.append(acc_e)
            acc_o = acc_e = 0.0
    o2[-1] += acc_o
    e2[-1] += acc_e
    return chi_square_gof(np.array(o2), np.array(e2))


def test_rejection_bridge_max_law_n30(cauchy):
    rng = np.random.default_rng(30)
    x, drawn = sample_bridges_rejection(cauchy, 30, 100_000, rng)
    assert x.shape == (100_000, 30) and np.all(x.sum(axis=1) == -1)
    stat, p = _delta_chi2(x.max(axis=1), oracle.bridge_max_law(cauchy, 30))
    assert p > 1e-3


def test_split_bridge_max_law_n30(cauchy):
    rng = np.random.default_rng(31)
    mx = np.array([sample_bridge_exact(cauchy, 30, rng, method="split").increments.max()
                   for _ in range(20_000)])
    stat, p = _delta_chi2(mx, oracle.bridge_max_law(cauchy, 30))
    assert p > 1e-3


def test_split_bridge_max_law_n200(cauchy):
    law = oracle.bridge_max_law(cauchy, 200)
    keys = np.array(sorted(law.support))
    cdf = np.cumsum([law.prob(k) for k in keys])
    rng = np.random.default_rng(200)
    mx = np.array([sample_bridge_exact(cauchy, 200, rng).increments.max() for _ in range(3000)])
    emp = np.searchsorted(np.sort(mx), keys, side="right") / len(mx)
    # discrete KS distance against the exact cdf; 1.95/sqrt(N) is the alpha = 1e-3 level
    assert np.max(np.abs(emp - cdf)) < 1.95 / math.sqrt(len(mx))


def test_split_identity_law_small_n(table3):
    # full vector law at n = 6 against enumeration (split forced at a tiny level)
    law = oracle.bridge_law(table3, 6, "identity", cap=1)
    s = SplitBridgeSampler(table3, 6, level=0)
    rng = np.random.default_rng(6)
    counts = {}
    N = 30_000
    for _ in range(N):
        v = tuple(s.sample(rng).increments.tolist())
        counts[v] = counts.get(v, 0) + 1
    keys = sorted(law.support)
    assert set(counts) <= set(keys)
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    exp = np.array([law.prob(k) for k in keys]) * N
    assert chi_square_gof(obs, exp)[1] > 1e-3


def test_split_sampler_records_tries(cauchy, rng):
    b = sample_bridge_exact(cauchy, 500, rng)
    assert b.bridge and b.tries >= 1 and not b.approximate
    assert int(b.increments.sum()) == -1 and b.increments.min() >= -1


# --- planted ------------------------------------------------------------------

def test_planted_binary_balanced(binary, rng):
    for _ in range(50):
        b = sample_bridge_planted(binary, 3, rng)
        assert b.approximate and int(b.increments.sum()) == -1


def test_planted_batch_rows_are_bridges(cauchy, rng):
    x = sample_planted_batch(cauchy, 40, 500, rng)
    assert x.shape == (500, 40) and np.all(x.sum(axis=1) == -1) and x.min() >= -1


def test_planted_max_law_matches_sampler(cauchy):
    # the exact planted law (oracle) is what the planted sampler produces
    rng = np.random.default_rng(20)
    x = sample_planted_batch(cauchy, 20, 200_000, rng)
    stat, p = _delta_chi2(x.max(axis=1), oracle.planted_max_law(cauchy, 20))
    assert p > 1e-3


def test_planted_bias_measured(cauchy):
    tv = oracle.exact_tv(oracle.planted_max_law(cauchy, 20), oracle.bridge_max_law(cauchy, 20))
    assert tv == pytest.approx(0.274, abs=2e-3)


@pytest.mark.xfail(strict=True, reason="planted sampler is biased at n=20: TV about 0.27")
def test_planted_tv_design_target(cauchy):
    tv = oracle.exact_tv(oracle.planted_max_law(cauchy, 20), oracle.bridge_max_law(cauchy, 20))
    assert tv <= 0.1


def test_planted_balancing_jump_n1e4(cauchy):
    rng = np.random.default_rng(44)
    n = 10_000
    x = cauchy.sample_jumps(rng, (400, n - 1))
    j = -1 - x.sum(axis=1)
    j = j[j >= -1]
    frac = float(np.mean((j / (n * (1 - cauchy.mean)) >= 0.8) & (j / (n * (1 - cauchy.mean)) <= 1.2)))
    assert frac >= 0.9


# --- vervaat / split ----------------------------------------------------------

def test_vervaat_examples():
    assert vervaat(np.array([-1, 2, -1, -1])).tolist() == [2, -1, -1, -1]
    assert vervaat(np.array([0, 0, -1])).tolist() == [0, 0, -1]
    with pytest.raises(ValueError):
        vervaat(np.array([0, 0]))


@st.composite
def bridges(draw):
    n = draw(st.integers(1, 30))
    x = np.array(draw(st.lists(st.integers(-1, 5), min_size=n, max_size=n)))
    # lower entries until the sum is -1 (raise if below)
    s = int(x.sum()) + 1
    i = 0
    while s != 0:
        if s > 0 and x[i % n] > -1:
            x[i % n] -= 1
            s -= 1
        elif s < 0:
            x[i % n] += 1
            s += 1
        i += 1
    return x


@settings(max_examples=300, deadline=None)
@given(bridges())
def test_vervaat_gives_excursion_with_same_multiset(x):
    e = vervaat(x)
    assert is_excursion(e)
    assert sorted(e.tolist()) == sorted(x.tolist())
    # the rotation class has exactly one excursion
    rots = [np.roll(x, -r) for r in range(len(x))]
    assert sum(is_excursion(r) for r in rots) == 1
    assert np.array_equal(vervaat(e), e)
    assert np.array_equal(vervaat_batch(x[None, :])[0], e)


def test_vervaat_batch_random_bridges_n12(cauchy):
    rng = np.random.default_rng(12)
    x, _ = sample_bridges_rejection(cauchy, 12, 10_000, rng)
    ex = vervaat_batch(x)
    for row, orig in zip(ex, x):
        t = decode(row)
        assert t.n == 12
        assert sorted((t.outdegrees - 1).tolist()) == sorted(orig.tolist())


def test_big_jump_split_examples():
    s = big_jump_split(np.array([2, -1, 5, 5]))
    assert (s.v_n, s.max_jump, s.rest.increments.tolist()) == (3, 5, [2, -1, 5])
    s = big_jump_split(np.array([-1]))
    assert (s.v_n, s.max_jump, s.rest.increments.tolist()) == (1, -1, [])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1, 9), min_size=1, max_size=40))
def test_big_jump_split_invariants(xs):
    x = np.array(xs)
    s = big_jump_split(x)
    assert s.max_jump == x.max() and x[s.v_n - 1] == s.max_jump
    assert np.all(x[: s.v_n - 1] < s.max_jump)
    assert np.array_equal(np.insert(s.rest.increments, s.v_n - 1, s.max_jump), x)


def test_rest_sum_tv_decreases_10_to_30(cauchy):
    tvs = [oracle.demax_sum_tv(cauchy, n) for n in (10, 30)]
    assert tvs[1] < tvs[0]


def test_bridge_probability_matches_enumeration(table3, cauchy):
    for d in (table3, cauchy):
        for n in range(1, 7):
            law = oracle.bridge_law(d, n, "sum") if n > 1 else None
            brute = 0.0
            import itertools
            for v in itertools.product(range(-1, n - 1), repeat=n):
                if sum(v) == -1:
                    brute += math.prod(d.jump_pmf(x) for x in v)
            assert bridge_probability(d, n) == pytest.approx(brute, rel=1e-13)
            if law is not None:
                assert law.support == {-1: pytest.approx(1.0)}


def test_reversal_exchangeability_exact(table3):
    import itertools
    for v in itertools.product((-1, 0, 1), repeat=5):
        p = math.prod(Fraction(table3.jump_pmf(x)) for x in v)
        q = math.prod(Fraction(table3.jump_pmf(x)) for x in reversed(v))
        assert p == q
