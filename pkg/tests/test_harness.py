import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cbtrees.harness import (ExperimentConfig, ExperimentResult, chi_square_gof, ks_critical,
                             ks_one_sample, ks_two_sample, rng_stream, run, splitmix64, stream_id)
from cbtrees.harness import emit as em
from cbtrees.harness.experiments import hdelta_bins
from cbtrees.harness.stats import mean_with_se, median_with_se

CAUCHY = {"family": "cauchy", "beta": 1.0, "c": 1.0, "m": 0.5}


# --- rng ----------------------------------------------------------------------

def test_splitmix64_reference_values():
    # first outputs of the reference generator seeded with 0 (state advanced by the golden gamma)
    gamma = 0x9E3779B97F4A7C15
    mask = (1 << 64) - 1
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(gamma) == 0x6E789E6AA1B965F4
    assert splitmix64((2 * gamma) & mask) == 0x06C45D188009454F


def test_rng_stream_deterministic():
    a = rng_stream(42, 7).integers(0, 2 ** 63, 64)
    b = rng_stream(42, 7).integers(0, 2 ** 63, 64)
    assert np.array_equal(a, b)


def test_rng_streams_differ():
    draws = [tuple(rng_stream(42, i).integers(0, 2 ** 63, 64)) for i in range(200)]
    assert len(set(draws)) == 200
    assert not np.array_equal(rng_stream(1, 0).random(64), rng_stream(2, 0).random(64))


def test_stream_id_packing():
    assert stream_id(0, 0) == 0
    assert stream_id(1, 2, 3) == (3 << 56) | (1 << 32) | 2
    with pytest.raises(ValueError):
        stream_id(0, 1 << 32)


# --- statistics ---------------------------------------------------------------

def test_ks_identical_samples():
    a = np.arange(50.0)
    d, p = ks_two_sample(a, a[::-1].copy())
    assert d == 0.0 and p == 1.0


def test_ks_uniform_self_consistency():
    rng = np.random.default_rng(9)
    ok = sum(ks_two_sample(rng.random(10_000), rng.random(10_000))[1] > 1e-3 for _ in range(100))
    assert ok >= 99


def test_ks_two_sample_hand():
    d, _ = ks_two_sample([1, 2, 3, 4], [3, 4, 5, 6])
    assert d == 0.5


def test_ks_one_sample_uniform():
    rng = np.random.default_rng(1)
    d, p = ks_one_sample(rng.random(2000), lambda u: np.clip(u, 0, 1))
    assert p > 1e-3
    d, p = ks_one_sample(rng.random(2000) ** 2, lambda u: np.clip(u, 0, 1))
    assert p < 1e-6


def test_ks_critical():
    assert ks_critical(1e-3, 2000, 2000) == pytest.approx(1.9495 * math.sqrt(2 / 2000), rel=1e-4)


def test_chi_square_hand():
    stat, p = chi_square_gof([10, 20, 30, 40], [25, 25, 25, 25])
    assert stat == 20.0
    # chi2(3) survival: 2(1 - Phi(sqrt x)) + sqrt(2x/pi) exp(-x/2)
    x = 20.0
    assert p == pytest.approx(math.erfc(math.sqrt(x / 2)) + math.sqrt(2 * x / math.pi) * math.exp(-x / 2), rel=1e-10)


def test_stats_degenerate_inputs():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])
    with pytest.raises(ValueError):
        chi_square_gof([1, 2], [0, 3])


def test_median_and_mean_se():
    x = np.arange(101.0)
    m, se = median_with_se(x)
    assert m == 50.0 and se > 0
    mu, se2 = mean_with_se(x)
    assert mu == 50.0 and se2 == pytest.approx(x.std(ddof=1) / math.sqrt(101))


def test_hdelta_bins():
    assert hdelta_bins(0.5, 2000) == 8
    assert hdelta_bins(0.5, 2000, 7) == 7


# --- config -------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("nope", CAUCHY, [10])
    with pytest.raises(ValueError):
        ExperimentConfig("height", CAUCHY, [])
    with pytest.raises(ValueError):
        ExperimentConfig("height", CAUCHY, [10], replicates=0)
    with pytest.raises(ValueError):
        ExperimentConfig("height", CAUCHY, [10], params={"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig("forests", CAUCHY, [100], params={"delta": 0.5})
    c = ExperimentConfig("forests", CAUCHY, ["1e3"], params={"delta": 0.2})
    assert c.n_values == [1000] and c.params["budget_factor"] == 10


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = [p for p in root.glob("*.json") if "experiment" in json.loads(p.read_text())]
    assert len(files) >= 7
    for p in files:
        ExperimentConfig.from_file(p)


# --- small runs ---------------------------------------------------------------

@pytest.fixture(scope="module")
def small_condensation():
    cfg = ExperimentConfig("condensation", CAUCHY, [100, 300], replicates=40, master_seed=3,
                           store_raw=True)
    return cfg, run(cfg)


def test_result_structure(small_condensation):
    cfg, res = small_condensation
    assert len(res.per_n) == 2 and res.verdicts
    for v in res.verdicts:
        assert {"name", "value", "tolerance", "passed", "detail"} <= set(v)
        assert v["tolerance"] is not None
    assert res.seeds["master_seed"] == 3
    assert res.sampler_report["100"]["approximate"] is False


def test_verdicts_recomputable_from_raw(small_condensation):
    cfg, res = small_condensation
    for row in res.per_n:
        n = row["n"]
        delta = np.array(res.raw[str(n)]["delta"])
        med = float(np.median(delta / (n * 0.5)))
        v = next(v for v in res.verdicts if v["name"] == f"median_delta_ratio[n={n}]")
        assert v["value"] == med
        assert v["passed"] == (0.7 <= med <= 1.05)


def test_json_round_trip_bit_exact(small_condensation, tmp_path):
    _, res = small_condensation
    em.emit(res, ["json", "csv"], tmp_path)
    back = em.load(tmp_path / "result.json")
    assert back.to_json() == res.to_json()
    assert back.per_n[0]["median_delta_ratio"] == res.per_n[0]["median_delta_ratio"]
    assert (tmp_path / "per_n.csv").read_text().startswith("n,")


def test_rerun_identical_and_worker_independent(small_condensation):
    cfg, res = small_condensation
    again = run(ExperimentConfig.from_dict(cfg.to_dict()))
    assert again.to_json(include_runtime=False) == res.to_json(include_runtime=False)
    par = run(ExperimentConfig.from_dict(cfg.to_dict()), workers=3)
    assert par.to_json(include_runtime=False) == res.to_json(include_runtime=False)


def test_empty_result_skeleton(tmp_path):
    sk = em.skeleton()
    assert set(sk) >= {"config", "per_n", "tests", "verdicts", "seeds", "runtime_seconds"}
    em.emit(ExperimentResult(config={}), ["json"], tmp_path)
    assert json.loads((tmp_path / "result.json").read_text())["verdicts"] == []


def test_hdelta_svg_structure(tmp_path):
    cfg = ExperimentConfig("hdelta", CAUCHY, [200], replicates=60, master_seed=5,
                           params={"bins": 4})
    res = run(cfg)
    files = em.emit(res, ["svg"], tmp_path)
    svg = ET.parse(tmp_path / "hdelta_n200.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    bars = svg.findall(f"{ns}rect")
    assert [b.get("data-bin") for b in bars] == ["0", "1", "2", "3", ">=4"]
    assert sum(float(b.get("data-count")) for b in bars) == 60
    curve = svg.find(f"{ns}polyline")
    vals = [float(x) for x in curve.get("data-values").split()]
    assert vals == pytest.approx([60 * 0.5 ** (j + 1) for j in range(4)] + [60 * 0.5 ** 4])
    assert files


def test_hdelta_binary_degenerate():
    # binary trees are paths: the root is the first max-outdegree vertex, so H_Delta = 0
    cfg = ExperimentConfig("hdelta", {"family": "table", "pmf": [0.5, 0.5]}, [200],
                           replicates=100, master_seed=1)
    res = run(cfg)
    assert res.per_n[0]["mean_h_delta"] == 0.0
    assert not res.passed


def test_prop4_runner_small():
    cfg = ExperimentConfig("prop4", CAUCHY, [1000, 10000], replicates=1)
    res = run(cfg)
    names = {v["name"] for v in res.verdicts}
    assert "u_drops_last_decade" in names and "log_u_error_decreases" in names


def test_bigjump_runner_small():
    cfg = ExperimentConfig("bigjump", CAUCHY, [100], replicates=60, master_seed=2,
                           params={"exact_n": [4, 6], "cap": 8})
    res = run(cfg)
    tv = [t["statistic"] for t in res.tests if t["test"].startswith("exact_tv")]
    assert len(tv) == 2 and all(0 < x < 1 for x in tv)


def test_forests_runner_small():
    cfg = ExperimentConfig("forests", CAUCHY, [400], replicates=60, master_seed=2)
    res = run(cfg)
    assert res.per_n[0]["forest_size"] == 100
    assert res.per_n[0]["budget_exceeded"] >= 0
