"""Self-contained SVG line charts of a metric against epoch."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .metrics import read_rows

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=70, right=170, top=40, bottom=50)
METRICS = {"reward": ("J_r", "Average episode return"),
           "cost": ("M_c", "Average episodic cost"),
           "cost_rate": ("rho_c", "Cost rate")}
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def _algorithm_of(path: Path) -> str:
    # runner layout: <out>/<suite>/<algorithm>/seed<k>.csv
    return path.parent.name


def aggregate(csv_paths, metric: str):
    """``{algorithm: (epochs, mean, low, high, n_seeds)}`` over seeds."""
    column = METRICS[metric][0]
    grouped = defaultdict(list)
    for p in map(Path, csv_paths):
        rows = read_rows(p)
        if not rows:
            raise ValueError(f"empty CSV: {p}")
        grouped[_algorithm_of(p)].append({r.epoch: getattr(r, column) for r in rows})
    out = {}
    for algo, seeds in grouped.items():
        epochs = sorted(set.intersection(*(set(s) for s in seeds)))
        vals = np.array([[s[e] for e in epochs] for s in seeds])
        out[algo] = (np.array(epochs), vals.mean(axis=0), vals.min(axis=0), vals.max(axis=0), len(seeds))
    return out


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series, metric: str, title: str = "") -> str:
    x_lo = min(float(s[0].min()) for s in series.values())
    x_hi = max(float(s[0].max()) for s in series.values())
    y_lo = min(float(s[2].min()) for s in series.values())
    y_hi = max(float(s[3].max()) for s in series.values())
    if y_hi == y_lo:
        pad = abs(y_lo) * 0.1 or 1.0
        y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y_lo) / (y_hi - y_lo)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">'
             f'{escape(title or METRICS[metric][1])}</text>',
             f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
             f'fill="none" stroke="black"/>']
    for y in _ticks(y_lo, y_hi):
        parts.append(f'<text x="{MARGIN["left"] - 6}" y="{sy(y) + 4:.2f}" text-anchor="end" '
                     f'font-size="11">{y:.4g}</text>')
    for x in _ticks(x_lo, x_hi):
        parts.append(f'<text x="{sx(x):.2f}" y="{HEIGHT - MARGIN["bottom"] + 16}" '
                     f'text-anchor="middle" font-size="11">{x:.4g}</text>')
    parts.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
                 f'font-size="12">epoch</text>')
    for i, (algo, (ep, mean, low, high, n)) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        if n > 1:
            upper = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(ep, high))
            lower = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(ep[::-1], low[::-1]))
            parts.append(f'<polygon class="band" data-algorithm="{escape(algo)}" '
                         f'points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(ep, mean))
        parts.append(f'<polyline class="mean" data-algorithm="{escape(algo)}" points="{pts}" '
                     f'fill="none" stroke="{color}" stroke-width="2"/>')
        ly = MARGIN["top"] + 16 * i + 10
        lx = WIDTH - MARGIN["right"] + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" '
                     f'stroke-width="2"/><text x="{lx + 24}" y="{ly + 4}" font-size="11">'
                     f'{escape(algo)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(csv_paths, metric: str, path=None, title: str = "") -> str:
    """Mean-across-seeds line per algorithm with a min-max band."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {sorted(METRICS)}")
    csv_paths = list(csv_paths)
    if not csv_paths:
        raise ValueError("need at least one CSV")
    svg = render_svg(aggregate(csv_paths, metric), metric, title)
    if path is not None:
        Path(path).write_text(svg)
    return svg
