"""Declarative Monte Carlo experiments.

Every replicate draws from its own stream ``rng_stream(master_seed,
stream_id(n_index, replicate, role))`` and results are assembled by index, so
the output does not depend on the number of worker processes.  Verdicts carry
the tolerance they were checked against.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import asymptotics, heights, oracle
from ..offspring import CauchyFamily, OffspringDistribution, from_spec
from ..tree import PlaneTree, children_spans, depths, stats
from ..walk import big_jump_split, sample_bridge_exact, sample_bridge_planted, vervaat
from .rng import rng_stream, stream_id
from .stats import chi_square_gof, ks_critical, ks_one_sample, ks_two_sample, mean_with_se, median_with_se

EXPERIMENTS = ("condensation", "fluctuation", "hdelta", "height", "bigjump", "forests", "prop4")
SAMPLERS = ("exact", "planted")
ROLE_TREE, ROLE_IID, ROLE_FOREST = 0, 1, 2
CHUNK = 16

DEFAULT_PARAMS = {
    "condensation": {"alpha": 1e-3, "median_band": [0.7, 1.05], "delta2_max": 0.05},
    "fluctuation": {"alpha": 1e-3, "iid_replicates": None, "frechet": False},
    "hdelta": {"alpha": 1e-3, "bins": None},
    "height": {"rel_tol": 0.25, "band_fraction": 0.9},
    "bigjump": {"alpha": 1e-3, "exact_n": [4, 6, 8], "cap": 8, "iid_replicates": None},
    "forests": {"alpha": 1e-3, "delta": None, "iid_replicates": None, "budget_factor": 10},
    "prop4": {"rel_tol": 0.25, "flat_tol": 0.01, "drop_min": 0.10},
}


@dataclass
class ExperimentConfig:
    experiment: str
    dist: dict
    n_values: list
    replicates: int = 100
    sampler: str = "exact"
    master_seed: int = 0
    emit: list = field(default_factory=lambda: ["json"])
    params: dict = field(default_factory=dict)
    store_raw: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        self.n_values = [int(float(n)) for n in self.n_values]
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n_values must be a nonempty list of positive sizes")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        self.master_seed = int(self.master_seed) & ((1 << 64) - 1)
        merged = dict(DEFAULT_PARAMS[self.experiment])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)} for {self.experiment}")
        merged.update(self.params)
        self.params = merged
        if self.experiment == "forests" and self.params["delta"] is not None:
            m = from_spec(self.dist).mean
            if not 0.0 <= self.params["delta"] < 1.0 - m:
                raise ValueError(f"delta must lie in [0, 1-m) = [0, {1.0 - m})")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    config: dict
    per_n: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    sampler_report: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime_seconds")
        return d

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(_clean(self.to_dict(include_runtime)), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentResult":
        return cls(**json.loads(text))


def _clean(x):
    """Make a structure JSON-safe: numpy scalars to Python, NaN to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    return x


def verdict(name: str, value, tolerance, passed: bool, detail: str = "") -> dict:
    return {"name": name, "value": _clean(value), "tolerance": _clean(tolerance),
            "passed": bool(passed), "detail": detail}


# ---------------------------------------------------------------------------
# worker side

_DISTS: dict = {}


def _dist(spec: dict) -> OffspringDistribution:
    key = json.dumps(spec, sort_keys=True)
    d = _DISTS.get(key)
    if d is None:
        d = _DISTS[key] = from_spec(spec)
    return d


def _tree_record(x: np.ndarray, forest_size: int | None) -> dict:
    t = PlaneTree(x + 1)
    s = stats(t)
    rec = {"delta": s.delta, "delta2": s.delta2, "h_delta": s.h_delta, "height": s.height}
    if forest_size:
        spans = children_spans(t, s.star_index)
        d = depths(t)
        hs = [int(d[a:b].max() - d[a]) for a, b in spans[:forest_size]]
        rec["forest_height"] = max(hs) if hs else 0
        rec["first_subtree_size"] = spans[0][1] - spans[0][0] if spans else 0
    return rec


def _task_trees(args):
    spec, n, sampler, seed, ids, forest_size = args
    dist = _dist(spec)
    out = []
    for sid in ids:
        rng = rng_stream(seed, sid)
        if sampler == "exact":
            b = sample_bridge_exact(dist, n, rng)
        else:
            b = sample_bridge_planted(dist, n, rng)
        rec = _tree_record(vervaat(b), forest_size)
        rec["tries"] = b.tries
        split = big_jump_split(b)
        rec["rest_max"] = int(split.rest.increments.max()) if n > 1 else -2
        out.append(rec)
    return out


def _task_iid_sums(args):
    spec, n, seed, ids = args
    dist = _dist(spec)
    out = []
    for sid in ids:
        x = dist.sample_jumps(rng_stream(seed, sid), n - 1)
        out.append((int(-x.sum()), int(x.max()) if n > 1 else -2))
    return out


def _task_gw_forests(args):
    spec, roots, budget, seed, ids = args
    dist = _dist(spec)
    out = []
    for sid in ids:
        rng = rng_stream(seed, sid)
        z, h, total, capped = roots, -1, 0, False
        while z > 0:
            h += 1
            total += z
            if total > budget:
                capped = True
                break
            z = int(dist.sample(rng, z).sum())
        out.append((h, capped))
    return out


def _run_tasks(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _chunks(ids):
    return [ids[i:i + CHUNK] for i in range(0, len(ids), CHUNK)]


def _sample_trees(cfg, n_index, n, count, workers, forest_size=None):
    ids = [stream_id(n_index, r, ROLE_TREE) for r in range(count)]
    tasks = [(cfg.dist, n, cfg.sampler, cfg.master_seed, c, forest_size) for c in _chunks(ids)]
    recs = [r for part in _run_tasks(_task_trees, tasks, workers) for r in part]
    keys = recs[0].keys()
    return {k: np.array([r[k] for r in recs]) for k in keys}


def _sample_iid(cfg, n_index, n, count, workers):
    ids = [stream_id(n_index, r, ROLE_IID) for r in range(count)]
    tasks = [(cfg.dist, n, cfg.master_seed, c) for c in _chunks(ids)]
    recs = [r for part in _run_tasks(_task_iid_sums, tasks, workers) for r in part]
    return np.array([r[0] for r in recs]), np.array([r[1] for r in recs])


# ---------------------------------------------------------------------------
# experiments

def run(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run one experiment; tolerance failures become failed verdicts."""
    t0 = time.perf_counter()
    res = ExperimentResult(config=_clean(config.to_dict()))
    res.seeds = {"master_seed": config.master_seed,
                 "stream": "rng_stream(master_seed, role<<56 | n_index<<32 | replicate)"}
    dist = from_spec(config.dist)
    _RUNNERS[config.experiment](config, dist, res, workers)
    res.per_n = _clean(res.per_n)
    res.tests = _clean(res.tests)
    res.sampler_report = _clean(res.sampler_report)
    res.raw = _clean(res.raw) if config.store_raw else {}
    res.runtime_seconds = time.perf_counter() - t0
    return res


def _report_tries(res, n, tries, sampler):
    res.sampler_report[str(n)] = {
        "sampler": sampler, "approximate": sampler == "planted",
        "mean_tries": float(np.mean(tries)), "max_tries": int(np.max(tries))}


def _condensation(cfg, dist, res, workers):
    p = cfg.params
    m = dist.mean
    for i, n in enumerate(cfg.n_values):
        t = _sample_trees(cfg, i, n, cfg.replicates, workers)
        _report_tries(res, n, t["tries"], cfg.sampler)
        ratio = t["delta"] / (n * (1.0 - m))
        med, se = median_with_se(ratio)
        med2, se2 = median_with_se(t["delta2"] / n)
        a_n = asymptotics.scaling_a(dist, n)
        bias = asymptotics.condensation_bias(dist, n)
        res.per_n.append({"n": n, "median_delta_ratio": med, "median_delta_ratio_se": se,
                          "mean_delta_ratio": mean_with_se(ratio)[0],
                          "median_delta2_over_n": med2, "median_delta2_over_n_se": se2,
                          "a_n": a_n, "first_order_bias": bias})
        lo, hi = p["median_band"]
        res.verdicts.append(verdict(f"median_delta_ratio[n={n}]", med, [lo, hi], lo <= med <= hi,
                                    "median of Delta/(n(1-m))"))
        res.verdicts.append(verdict(f"median_delta2_over_n[n={n}]", med2, p["delta2_max"],
                                    med2 <= p["delta2_max"]))
        _frechet_check(dist, n, t["delta2"], p["alpha"], res)
        if cfg.store_raw:
            res.raw[str(n)] = {"delta": t["delta"], "delta2": t["delta2"]}


def _frechet_cdf(u):
    u = np.asarray(u, dtype=float)
    return np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)


def _frechet_check(dist, n, delta2, alpha, res):
    """One-sample KS of ``delta2 / a_n`` against ``P(Y <= u) = exp(-1/u)``."""
    scaled = delta2 / asymptotics.scaling_a(dist, n)
    d, pval = ks_one_sample(scaled, _frechet_cdf)
    res.tests.append({"n": n, "test": "ks_delta2_over_a_n_vs_exp(-1/u)", "statistic": d,
                      "p_value": pval, "critical": ks_critical(alpha, len(scaled))})
    res.verdicts.append(verdict(f"ks_delta2_frechet[n={n}]", pval, alpha, pval >= alpha,
                                "KS of Delta2/a_n against P(Y<=u)=exp(-1/u)"))


def _fluctuation(cfg, dist, res, workers):
    p = cfg.params
    n_iid = p["iid_replicates"] or cfg.replicates
    stats_by_n = []
    for i, n in enumerate(cfg.n_values):
        t = _sample_trees(cfg, i, n, cfg.replicates, workers)
        _report_tries(res, n, t["tries"], cfg.sampler)
        iid, _ = _sample_iid(cfg, i, n, n_iid, workers)
        d, pval = ks_two_sample(t["delta"], iid)
        crit = ks_critical(p["alpha"], len(t["delta"]), len(iid))
        stats_by_n.append(d)
        res.per_n.append({"n": n, "median_delta": float(np.median(t["delta"])),
                          "median_minus_iid_sum": float(np.median(iid))})
        res.tests.append({"n": n, "test": "ks_two_sample(Delta, -(X_1+...+X_{n-1}))",
                          "statistic": d, "p_value": pval, "critical": crit})
        res.verdicts.append(verdict(f"ks_fluctuation[n={n}]", d, crit, d < crit,
                                    "two-sample KS statistic below the alpha critical value"))
        if p["frechet"]:
            _frechet_check(dist, n, t["delta2"], p["alpha"], res)
        if cfg.store_raw:
            res.raw[str(n)] = {"delta": t["delta"], "iid": iid}
    if len(stats_by_n) > 1:
        res.verdicts.append(verdict("ks_decreases_first_to_last", stats_by_n, "last < first",
                                    stats_by_n[-1] < stats_by_n[0]))


def hdelta_bins(m: float, count: int, bins: int | None = None) -> int:
    """Number of individual bins ``0..J-1`` (plus a ``>= J`` bin) with expected counts >= 5."""
    if bins is not None:
        return int(bins)
    j = 1
    while count * m ** (j + 1) >= 5 and count * (1 - m) * m ** j >= 5:
        j += 1
    return j


def _hdelta(cfg, dist, res, workers):
    p = cfg.params
    m = dist.mean
    for i, n in enumerate(cfg.n_values):
        t = _sample_trees(cfg, i, n, cfg.replicates, workers)
        _report_tries(res, n, t["tries"], cfg.sampler)
        h = t["h_delta"]
        J = hdelta_bins(m, len(h), p["bins"])
        obs = np.array([np.sum(h == j) for j in range(J)] + [np.sum(h >= J)], dtype=float)
        probs = np.array([(1 - m) * m ** j for j in range(J)] + [m ** J])
        exp_ = probs * len(h)
        if np.any(exp_ <= 0):
            res.verdicts.append(verdict(f"chi2_hdelta[n={n}]", None, p["alpha"], False,
                                        "degenerate geometric law"))
            continue
        stat, pval = chi_square_gof(obs, exp_)
        res.per_n.append({"n": n, "bins": J, "observed": obs, "expected": exp_,
                          "mean_h_delta": float(h.mean())})
        res.tests.append({"n": n, "test": f"chi_square(H_Delta, Geometric) on 0..{J - 1} and >= {J}",
                          "statistic": stat, "p_value": pval, "df": J})
        res.verdicts.append(verdict(f"chi2_hdelta[n={n}]", pval, p["alpha"], pval >= p["alpha"]))
        if cfg.store_raw:
            res.raw[str(n)] = {"h_delta": h}


def _height(cfg, dist, res, workers):
    p = cfg.params
    m = dist.mean
    target = 1.0 / math.log(1.0 / m)
    depth = int(math.ceil(3 * math.log(max(cfg.n_values)) / math.log(1 / m))) + 2
    table = heights.q_table(dist, depth)
    errs = []
    for i, n in enumerate(cfg.n_values):
        t = _sample_trees(cfg, i, n, cfg.replicates, workers)
        _report_tries(res, n, t["tries"], cfg.sampler)
        h = t["height"]
        ratio = h / math.log(n)
        med = float(np.median(ratio))
        pred = heights.height_prediction(dist, n, table)
        lo, hi = pred.threshold_band
        frac = float(np.mean((h >= lo) & (h <= hi)))
        err = abs(med / target - 1.0)
        errs.append(err)
        res.per_n.append({"n": n, "median_height": float(np.median(h)), "median_H_over_log_n": med,
                          "target": target, "relative_error": err, "band": [lo, hi],
                          "fraction_in_band": frac, "center": pred.center,
                          "second_order_center": pred.second_order})
        res.verdicts.append(verdict(f"band_fraction[n={n}]", frac, p["band_fraction"],
                                    frac >= p["band_fraction"]))
        if cfg.store_raw:
            res.raw[str(n)] = {"height": h}
    res.verdicts.append(verdict(f"median_H_over_log_n_within[n={cfg.n_values[-1]}]", errs[-1],
                                p["rel_tol"], errs[-1] <= p["rel_tol"]))
    if len(errs) > 1:
        mono = all(b < a for a, b in zip(errs, errs[1:]))
        res.verdicts.append(verdict("median_H_over_log_n_monotone_approach", errs, "strictly decreasing", mono))


def _bigjump(cfg, dist, res, workers):
    p = cfg.params
    tvs = []
    for n in p["exact_n"]:
        law = oracle.demax_law(dist, n, "sum", p["cap"])
        iid = oracle.iid_law(dist, n - 1, "sum", p["cap"])
        tv = oracle.exact_tv(law, iid)
        tvs.append(tv)
        res.tests.append({"n": n, "test": "exact_tv(rest sum, iid sum)", "statistic": tv})
    if len(tvs) > 1:
        res.verdicts.append(verdict("exact_tv_strictly_decreasing", tvs, "strictly decreasing",
                                    all(b < a for a, b in zip(tvs, tvs[1:]))))
    n_iid = p["iid_replicates"] or cfg.replicates
    for i, n in enumerate(cfg.n_values):
        t = _sample_trees(cfg, i, n, cfg.replicates, workers)
        _report_tries(res, n, t["tries"], cfg.sampler)
        iid_sum, iid_max = _sample_iid(cfg, i, n, n_iid, workers)
        rest_sum = -t["delta"]  # the rest of a bridge sums to -1 - max jump = -Delta
        for name, a, b in (("sum", rest_sum, -iid_sum), ("max", t["rest_max"], iid_max)):
            d, pval = ks_two_sample(a, b)
            res.tests.append({"n": n, "test": f"ks_two_sample(rest {name}, iid {name})",
                              "statistic": d, "p_value": pval})
            res.verdicts.append(verdict(f"ks_rest_{name}[n={n}]", pval, p["alpha"], pval >= p["alpha"],
                                        "statistic-level evidence only"))
        res.per_n.append({"n": n, "median_rest_max": float(np.median(t["rest_max"])),
                          "median_iid_max": float(np.median(iid_max))})


def _forests(cfg, dist, res, workers):
    p = cfg.params
    m = dist.mean
    delta = p["delta"] if p["delta"] is not None else (1.0 - m) / 2.0
    if not 0.0 <= delta < 1.0 - m:
        raise ValueError("delta must lie in [0, 1-m)")
    n_iid = p["iid_replicates"] or cfg.replicates
    for i, n in enumerate(cfg.n_values):
        size = int(math.floor(delta * n))
        if size < 1:
            raise ValueError(f"floor(delta n) = 0 at n={n}")
        t = _sample_trees(cfg, i, n, cfg.replicates, workers, forest_size=size)
        _report_tries(res, n, t["tries"], cfg.sampler)
        budget = p["budget_factor"] * n
        ids = [stream_id(i, r, ROLE_FOREST) for r in range(n_iid)]
        tasks = [(cfg.dist, size, budget, cfg.master_seed, c) for c in _chunks(ids)]
        gw = [r for part in _run_tasks(_task_gw_forests, tasks, workers) for r in part]
        gw_h = np.array([g[0] for g in gw])
        capped = int(sum(g[1] for g in gw))
        d, pval = ks_two_sample(t["forest_height"], gw_h)
        res.tests.append({"n": n, "test": "ks_two_sample(forest height, iid forest height)",
                          "statistic": d, "p_value": pval, "budget_exceeded": capped})
        res.verdicts.append(verdict(f"ks_forest_height[n={n}]", pval, p["alpha"], pval >= p["alpha"],
                                    "statistic-level evidence only"))
        iid_sizes = _gw_sizes(dist, cfg, i, n_iid, budget)
        d2, p2 = ks_two_sample(t["first_subtree_size"], iid_sizes)
        res.tests.append({"n": n, "test": "ks_two_sample(first subtree size, iid tree size)",
                          "statistic": d2, "p_value": p2})
        res.verdicts.append(verdict(f"ks_first_subtree_size[n={n}]", p2, p["alpha"], p2 >= p["alpha"],
                                    "statistic-level evidence only"))
        res.per_n.append({"n": n, "forest_size": size, "delta": delta,
                          "median_forest_height": float(np.median(t["forest_height"])),
                          "median_iid_forest_height": float(np.median(gw_h)),
                          "budget_exceeded": capped})


def _gw_sizes(dist, cfg, n_index, count, budget):
    out = np.empty(count, dtype=np.int64)
    for r in range(count):
        rng = rng_stream(cfg.master_seed, stream_id(n_index, r, ROLE_FOREST + 1))
        z, total = 1, 0
        while z > 0 and total <= budget:
            total += z
            z = int(dist.sample(rng, z).sum())
        out[r] = total
    return out


def _prop4(cfg, dist, res, workers):
    p = cfg.params
    if not isinstance(dist, CauchyFamily):
        raise ValueError("prop4 needs a cauchy family distribution")
    ns = cfg.n_values
    table = heights.q_table(dist, max(ns))
    m = dist.mean
    beta = dist.beta
    res.tests.append({"test": "qtable", "n_max": table.n_max, "overlap_max_rel": table.overlap_max_rel})
    if beta <= 1.0:
        errs = []
        for n in ns:
            tgt = heights.prop4_log_u_target(beta, dist.c_eff, m, n)
            err = abs(table.log_u[n] / tgt - 1.0)
            errs.append(err)
            res.per_n.append({"n": n, "log_u": table.log_u[n], "target": tgt, "relative_error": err,
                              "prop4_center": heights.prop4_center(beta, dist.c_eff, m, n)})
        res.verdicts.append(verdict(f"log_u_relative_error[n={ns[-1]}]", errs[-1], p["rel_tol"],
                                    errs[-1] <= p["rel_tol"]))
        res.verdicts.append(verdict("log_u_error_decreases", errs, "last < first", errs[-1] < errs[0]))
    else:
        for n in ns:
            res.per_n.append({"n": n, "log_u": table.log_u[n]})
    # tightness: relative change of u over the last decade
    n_hi = ns[-1]
    n_lo = max(1, n_hi // 10)
    change = abs(math.expm1(table.log_u[n_hi] - table.log_u[n_lo]))
    verdict_nlogn = "convergent" if beta > 1 else "divergent"
    res.tests.append({"test": "u_relative_change_last_decade", "n_lo": n_lo, "n_hi": n_hi,
                      "statistic": change, "nlogn": verdict_nlogn})
    if beta > 1:
        res.verdicts.append(verdict("u_flat_last_decade", change, p["flat_tol"], change < p["flat_tol"]))
    else:
        res.verdicts.append(verdict("u_drops_last_decade", change, p["drop_min"], change > p["drop_min"]))


_RUNNERS = {"condensation": _condensation, "fluctuation": _fluctuation, "hdelta": _hdelta,
            "height": _height, "bigjump": _bigjump, "forests": _forests, "prop4": _prop4}
