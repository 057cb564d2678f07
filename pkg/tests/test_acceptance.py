"""End-to-end acceptance criteria 1-12, run at their stated sizes and tolerances.

Each test carries ``acceptance(k)``; the terminal summary prints one PASS/FAIL
line per criterion.  Monte Carlo criteria run the shipped configs in
``configs/``.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from cbtrees import asymptotics as asy
from cbtrees import heights as hg
from cbtrees import oracle
from cbtrees.harness import ExperimentConfig, chi_square_gof, run
from cbtrees.offspring import CauchyFamily, TableDistribution, tilt
from cbtrees.walk import bridge_probability, sample_bridges_rejection, vervaat_batch

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _config(name):
    return ExperimentConfig.from_file(CONFIGS / f"{name}.json")


def _verdict(res, name):
    return next(v for v in res.verdicts if v["name"] == name)


def _timed_run(name):
    t0 = time.perf_counter()
    res = run(_config(name))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def condensation_run():
    return _timed_run("condensation")


@pytest.fixture(scope="module")
def hdelta_run():
    return _timed_run("hdelta")


@pytest.fixture(scope="module")
def height_run():
    return _timed_run("height")


@pytest.fixture(scope="module")
def fluctuation_run():
    return _timed_run("fluctuation")


# ---------------------------------------------------------------------------

@pytest.mark.acceptance(1)
def test_c01_coding_and_measure(record_property):
    t0 = time.perf_counter()
    d = TableDistribution([0.6, 0.2, 0.2])
    rng = np.random.default_rng(20240601)
    worst_p = 1.0
    for n in range(1, 8):
        law = oracle.conditioned_law(d, n, "identity", 2)
        x, _ = sample_bridges_rejection(d, n, 10 ** 6, rng)
        trees = vervaat_batch(x) + 1
        keys, counts = np.unique(trees, axis=0, return_counts=True)
        seen = {tuple(int(v) for v in k): int(c) for k, c in zip(keys, counts)}
        assert set(seen) <= set(law.support)
        if len(law.support) == 1:
            assert sum(seen.values()) == 10 ** 6
            continue
        support = sorted(law.support)
        obs = np.array([seen.get(k, 0) for k in support], dtype=float)
        exp = np.array([law.prob(k) for k in support]) * 10 ** 6
        assert exp.min() >= 5
        _, p = chi_square_gof(obs, exp)
        worst_p = min(worst_p, p)
        assert p >= 1e-3, f"n={n}: chi-square p={p}"
    worst_rel = 0.0
    for n in range(1, 9):
        total = oracle.enumerate_trees(d, n, 2).total
        rel = abs(total - bridge_probability(d, n) / n) / total
        worst_rel = max(worst_rel, rel)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"min chi2 p={worst_p:.3g}, cycle lemma rel={worst_rel:.2e}, {elapsed:.0f}s")
    assert worst_rel <= 1e-12
    assert elapsed < 120


@pytest.mark.acceptance(2)
def test_c02_tilting_invariance(record_property):
    d = CauchyFamily(1.0, 1.0, 0.5)
    base = oracle.conditioned_law(d, 6, "identity", 10)
    worst = 0.0
    for lam in (0.9, 0.5, 0.1):
        tv = oracle.exact_tv(base, oracle.conditioned_law(tilt(d, lam), 6, "identity", 10))
        worst = max(worst, tv)
    record_property("detail", f"max TV={worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.acceptance(3)
def test_c03_q_recurrence(record_property):
    t0 = time.perf_counter()
    t = hg.q_table(TableDistribution([0.5, 0.5]), 10 ** 6)
    binary_err = float(np.max(np.abs(t.log_u)))
    d = CauchyFamily(1.0, 1.0, 0.5)
    ident = hg.q_step_identity_check(d, range(0, 101))
    tc = hg.q_table(d, 10 ** 5)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"binary max|log u|={binary_err:.1e}, identity={ident['max_rel_error']:.1e}, "
                              f"overlap={tc.overlap_max_rel:.1e}")
    assert binary_err <= 1e-12
    assert ident["max_rel_error"] <= 1e-12
    assert tc.overlap_max_rel <= 1e-6
    assert elapsed < 300


@pytest.mark.acceptance(4)
def test_c04_lemma1_numerics(record_property):
    d = CauchyFamily(1.0, 1.0, 0.5)
    r = {n: asy.ell_star(d, n) * math.log(n) / d.c_eff for n in (10 ** 5, 10 ** 6, 10 ** 8)}
    tab = asy.lemma1_report(d, asy.decades(3, 7))
    record_property("detail", f"ratio(1e5,1e6,1e8)=({r[10**5]:.6f}, {r[10**6]:.6f}, {r[10**8]:.6f})")
    assert 0.85 <= r[10 ** 6] <= 1.15
    assert abs(r[10 ** 8] - 1) < abs(r[10 ** 5] - 1)
    assert tab.flags["a_over_n_decreasing"] and tab.flags["L_over_ellstar_decreasing"]


@pytest.mark.acceptance(5)
def test_c05_condensation(condensation_run, record_property):
    res, elapsed = condensation_run
    med = _verdict(res, "median_delta_ratio[n=20000]")
    d2 = _verdict(res, "median_delta2_over_n[n=20000]")
    record_property("detail", f"median Delta/(n(1-m))={med['value']:.4f} (band {med['tolerance']}), "
                              f"median Delta2/n={d2['value']:.4f}, {elapsed:.0f}s")
    assert res.config["replicates"] == 500 and res.config["sampler"] == "exact"
    assert d2["passed"]
    assert med["passed"]
    assert elapsed < 3600


@pytest.mark.acceptance(6)
def test_c06_hdelta_geometric(hdelta_run, record_property):
    res, _ = hdelta_run
    v = _verdict(res, "chi2_hdelta[n=5000]")
    record_property("detail", f"chi2 p={v['value']:.3g}")
    assert res.config["replicates"] == 2000 and res.per_n[0]["bins"] == 7
    assert v["passed"]


@pytest.mark.acceptance(7)
def test_c07_height(height_run, record_property):
    res, _ = height_run
    errs = [row["relative_error"] for row in res.per_n]
    fracs = [row["fraction_in_band"] for row in res.per_n]
    record_property("detail", f"rel err={[round(float(e), 3) for e in errs]}, band fraction={fracs}")
    assert [row["n"] for row in res.per_n] == [1000, 10000, 100000]
    assert errs[-1] <= 0.25
    assert errs[0] > errs[1] > errs[2]
    assert all(f >= 0.9 for f in fracs)


@pytest.mark.acceptance(8)
def test_c08_fluctuations(fluctuation_run, record_property):
    res, _ = fluctuation_run
    ks = {t["n"]: t for t in res.tests if t["test"].startswith("ks_two_sample")}
    fr = _verdict(res, "ks_delta2_frechet[n=20000]")
    crit = 1.95 * math.sqrt(2 / 2000)
    record_property("detail", f"KS(500)={ks[500]['statistic']:.4f}, KS(2e4)={ks[20000]['statistic']:.4f} "
                              f"(critical {crit:.4f}), Frechet p={fr['value']:.3g}")
    assert res.config["replicates"] == 2000
    assert ks[20000]["statistic"] < ks[500]["statistic"]
    assert ks[20000]["statistic"] < crit
    assert fr["passed"]


@pytest.mark.acceptance(9)
def test_c09_one_big_jump_exact_tv(record_property):
    t0 = time.perf_counter()
    d = CauchyFamily(1.0, 1.0, 0.5)
    tvs = []
    for n in (4, 6, 8):
        tv = oracle.exact_tv(oracle.demax_law(d, n, "sum", 8), oracle.iid_law(d, n - 1, "sum", 8))
        # second route: the rest sum is -1 - max, whose law comes from convolutions
        assert tv == pytest.approx(oracle.demax_sum_tv(d, n), abs=1e-12)
        tvs.append(tv)
    record_property("detail", f"TV(4,6,8)={[round(x, 4) for x in tvs]}")
    assert time.perf_counter() - t0 < 600
    assert tvs[0] > tvs[1] > tvs[2]


@pytest.mark.acceptance(10)
def test_c10_prop4_second_order(record_property):
    out = {}
    for beta in (1.0, 0.5):
        d = CauchyFamily(beta, 1.0, 0.5)
        t = hg.q_table(d, 10 ** 6)
        errs = []
        for n in (10 ** 4, 10 ** 6):
            target = hg.prop4_log_u_target(beta, d.c_eff, d.mean, n)
            errs.append(abs(t.log_u[n] / target - 1))
        out[beta] = errs
    record_property("detail", f"beta=1 err(1e4,1e6)={[round(float(e), 4) for e in out[1.0]]}, "
                              f"beta=0.5 err={[round(float(e), 4) for e in out[0.5]]}")
    for errs in out.values():
        assert errs[1] <= 0.25
        assert errs[1] < errs[0]


@pytest.mark.acceptance(11)
def test_c11_tightness_dichotomy(record_property):
    change = {}
    for beta in (1.5, 1.0):
        t = hg.q_table(CauchyFamily(beta, 1.0, 0.5), 10 ** 6)
        change[beta] = abs(math.expm1(t.log_u[10 ** 6] - t.log_u[10 ** 5]))
        assert np.all(np.diff(t.log_u[10 ** 5:]) < 0) or beta > 1
    record_property("detail", f"relative change over 1e5..1e6: beta=1.5 {change[1.5]:.4f}, "
                              f"beta=1 {change[1.0]:.4f}")
    assert change[1.5] < 0.01
    assert change[1.0] > 0.10


@pytest.mark.acceptance(12)
def test_c12_determinism(record_property):
    t0 = time.perf_counter()
    cfg = _config("determinism")
    one = run(cfg, workers=1).to_json(include_runtime=False)
    eight = run(ExperimentConfig.from_file(CONFIGS / "determinism.json"), workers=8).to_json(
        include_runtime=False)
    again = run(ExperimentConfig.from_file(CONFIGS / "determinism.json"), workers=1).to_json(
        include_runtime=False)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{len(one)} bytes, identical={one == eight == again}, {elapsed:.0f}s")
    assert one == eight == again
    assert "runtime_seconds" not in json.loads(one)
    assert elapsed < 300
