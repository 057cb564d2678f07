"""Write experiment results as JSON, CSV and SVG.

JSON layout (keys sorted, floats written with ``repr`` so they re-parse
bit-exactly, non-finite values as ``null``)::

    {"config": {...}, "per_n": [{...}], "tests": [{...}],
     "verdicts": [{"name", "value", "tolerance", "passed", "detail"}],
     "seeds": {...}, "sampler_report": {...}, "raw": {...},
     "runtime_seconds": float}

SVG plots keep their data in ``data-*`` attributes on every bar or step.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

from .experiments import ExperimentResult

FORMATS = ("json", "csv", "svg")
W, H, PAD = 480, 300, 40


def skeleton() -> dict:
    return ExperimentResult(config={}).to_dict()


def emit(result: ExperimentResult, formats, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {fmt!r}")
        if fmt == "json":
            p = out / "result.json"
            p.write_text(result.to_json())
            written.append(p)
        elif fmt == "csv":
            p = out / "per_n.csv"
            write_csv(result.per_n, p)
            written.append(p)
            p = out / "verdicts.csv"
            write_csv([{k: json.dumps(v) if isinstance(v, (list, dict)) else v
                        for k, v in row.items()} for row in result.verdicts], p)
            written.append(p)
        else:
            written.extend(write_svgs(result, out))
    return written


def write_csv(rows, path) -> None:
    rows = list(rows)
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})


def write_svgs(result: ExperimentResult, out: Path) -> list[Path]:
    written = []
    exp = result.config.get("experiment")
    if exp == "hdelta":
        for row in result.per_n:
            p = out / f"hdelta_n{row['n']}.svg"
            p.write_text(hdelta_svg(row["observed"], row["expected"], f"H_Delta, n={row['n']}"))
            written.append(p)
    for n, raw in sorted(result.raw.items()):
        for name, values in raw.items():
            p = out / f"ecdf_{name}_n{n}.svg"
            p.write_text(ecdf_svg(values, f"{name}, n={n}"))
            written.append(p)
    return written


def hdelta_svg(observed, expected, title: str) -> str:
    """Bars for observed counts and a polyline for the geometric expectation."""
    obs = np.asarray(observed, dtype=float)
    exp_ = np.asarray(expected, dtype=float)
    top = max(obs.max(initial=0), exp_.max(initial=0), 1.0)
    k = len(obs)
    bw = (W - 2 * PAD) / max(k, 1)
    parts = [_head(title)]
    for j, (o, e) in enumerate(zip(obs, exp_)):
        h = (H - 2 * PAD) * o / top
        x = PAD + j * bw
        label = f">={j}" if j == k - 1 else str(j)
        parts.append(f'<rect class="bar" x="{x:.2f}" y="{H - PAD - h:.2f}" width="{bw * 0.8:.2f}" '
                     f'height="{h:.2f}" data-bin={quoteattr(label)} data-count="{float(o)!r}" '
                     f'data-expected="{float(e)!r}"/>')
    pts = " ".join(f"{PAD + (j + 0.4) * bw:.2f},{H - PAD - (H - 2 * PAD) * e / top:.2f}"
                   for j, e in enumerate(exp_))
    parts.append(f'<polyline class="expected" fill="none" stroke="red" points="{pts}" '
                 f'data-values="{" ".join(repr(float(e)) for e in exp_)}"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def ecdf_svg(values, title: str) -> str:
    v = np.sort(np.asarray(values, dtype=float))
    parts = [_head(title)]
    if v.size:
        lo, hi = float(v[0]), float(v[-1])
        span = hi - lo if hi > lo else 1.0
        xs, cnt = np.unique(v, return_counts=True)
        cum = np.cumsum(cnt) / v.size
        for x, c in zip(xs, cum):
            px = PAD + (W - 2 * PAD) * (x - lo) / span
            py = H - PAD - (H - 2 * PAD) * c
            parts.append(f'<circle class="step" cx="{px:.2f}" cy="{py:.2f}" r="1.5" '
                         f'data-x="{float(x)!r}" data-ecdf="{float(c)!r}"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def _head(title: str) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'data-title={quoteattr(title)}>\n<text x="{PAD}" y="20">{_esc(title)}</text>\n'
            f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>')


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def load(path) -> ExperimentResult:
    return ExperimentResult.from_json(Path(path).read_text())


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
