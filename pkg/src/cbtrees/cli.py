"""Command line interface: ``cbtrees <subcommand> ...``.

Exit codes: 0 success (all verdicts pass), 2 verdict failure, 1 error.
"""
from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, heights, oracle
from .harness import emit as emit_mod
from .harness.experiments import ExperimentConfig, run
from .harness.rng import rng_stream, stream_id
from .offspring import from_spec
from .tree import decode, stats
from .walk import sample_bridge_exact, sample_bridge_planted, vervaat


def _load_dist(arg: str):
    text = arg if arg.lstrip().startswith("{") else Path(arg).read_text()
    return from_spec(json.loads(text))


def _num_list(s: str) -> list[int]:
    return [int(float(x)) for x in s.split(",") if x.strip()]


def _sink(args, name: str, binary: bool = False):
    if args.out is None:
        return sys.stdout.buffer if binary else sys.stdout
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return open(out / name, "wb" if binary else "w")


def cmd_sample(args) -> int:
    dist = _load_dist(args.dist)
    n = int(float(args.n))
    fh = _sink(args, "excursions.bin" if args.binary else "excursions.txt", args.binary)
    for r in range(args.count):
        rng = rng_stream(args.seed, stream_id(0, r))
        if args.sampler == "exact":
            b = sample_bridge_exact(dist, n, rng)
        else:
            b = sample_bridge_planted(dist, n, rng)
        x = vervaat(b)
        if args.binary:
            fh.write(struct.pack("<I", n) + x.astype("<i8").tobytes())
        else:
            fh.write(" ".join(map(str, x.tolist())) + "\n")
    if args.sampler == "planted":
        print("# APPROXIMATE: planted sampler output", file=sys.stderr)
    if fh not in (sys.stdout, sys.stdout.buffer):
        fh.close()
    return 0


def _read_excursions(path: str):
    data = Path(path).read_bytes()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        text = None
    if text is not None and all(c in "-0123456789 \n\r\t" for c in text[:4096]):
        for line in text.splitlines():
            if line.strip():
                yield np.array(line.split(), dtype=np.int64)
        return
    pos = 0
    while pos < len(data):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        yield np.frombuffer(data, dtype="<i8", count=n, offset=pos).astype(np.int64)
        pos += 8 * n


def cmd_stats(args) -> int:
    fh = _sink(args, "stats.csv")
    fh.write("n,delta,delta2,h_delta,height,star_index\n")
    for x in _read_excursions(args.inp):
        s = stats(decode(x))
        fh.write(f"{s.n},{s.delta},{s.delta2},{s.h_delta},{s.height},{s.star_index}\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_sequences(args) -> int:
    dist = _load_dist(args.dist)
    table = asymptotics.lemma1_report(dist, _num_list(args.n))
    fh = _sink(args, "sequences.csv")
    cols = ["n", "a_n", "b_n", "ell_star_n", "ell_star_a_n", "L_over_ellstar", "a_over_n"]
    fh.write(",".join(cols) + "\n")
    for row in table.rows():
        fh.write(",".join(repr(row[c]) for c in cols) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_qtable(args) -> int:
    dist = _load_dist(args.dist)
    t = heights.q_table(dist, int(float(args.nmax)))
    fh = _sink(args, "qtable.csv")
    fh.write("n,log_q,log_u,mode\n")
    for n in range(t.n_max + 1):
        fh.write(f"{n},{t.log_q[n]!r},{t.log_u[n]!r},{t.mode[n]}\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_predict(args) -> int:
    dist = _load_dist(args.dist)
    pred = heights.height_prediction(dist, int(float(args.n)))
    fh = _sink(args, "predict.json")
    fh.write(json.dumps(pred.to_dict(), indent=1) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_enumerate(args) -> int:
    dist = _load_dist(args.dist)
    law = oracle.conditioned_law(dist, args.n, args.stat, args.cap)
    raw = oracle.enumerate_trees(dist, args.n, args.cap)
    doc = law.to_json()
    doc["meta"].update({"n": args.n, "cap": args.cap, "statistic": args.stat,
                        "unnormalized_total": raw.total, "truncation_error": raw.truncation_error})
    fh = _sink(args, "law.json")
    fh.write(json.dumps(doc, indent=1) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_experiment(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    if args.dist is not None:
        cfg["dist"] = _load_dist(args.dist).to_spec()
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    config = ExperimentConfig.from_dict(cfg)
    result = run(config, workers=args.workers)
    out = args.out or "."
    emit_mod.emit(result, config.emit, out)
    for v in result.verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['name']}: value={v['value']} "
              f"tolerance={v['tolerance']}")
    return 0 if result.passed else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbtrees", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dist=True):
        if dist:
            sp.add_argument("--dist", required=True, help="distribution JSON file or inline JSON")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output directory (default: stdout)")

    sp = sub.add_parser("sample", help="sample excursions of size-conditioned trees")
    common(sp)
    sp.add_argument("--n", required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--sampler", choices=["exact", "planted"], default="exact")
    sp.add_argument("--binary", action="store_true", help="u32 n then n little-endian i64 per record")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("stats", help="tree statistics of excursions")
    common(sp, dist=False)
    sp.add_argument("--dist", default=None, help="ignored; accepted for uniformity")
    sp.add_argument("--in", dest="inp", required=True)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("sequences", help="a_n, b_n and ell_star table")
    common(sp)
    sp.add_argument("--n", required=True, help="comma separated sizes, e.g. 1e3,1e4")
    sp.set_defaults(func=cmd_sequences)

    sp = sub.add_parser("qtable", help="height tail table Q_n")
    common(sp)
    sp.add_argument("--nmax", required=True)
    sp.set_defaults(func=cmd_qtable)

    sp = sub.add_parser("predict", help="height predictions for size n")
    common(sp)
    sp.add_argument("--n", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("enumerate", help="exact conditioned law of a tree statistic")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--cap", type=int, default=None)
    sp.add_argument("--stat", default="delta")
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("experiment", help="run a Monte Carlo experiment from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--dist", default=None, help="override the config's distribution")
    sp.add_argument("--seed", type=int, default=None, help="override the master seed")
    sp.add_argument("--out", default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
