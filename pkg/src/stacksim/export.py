"""Waveform CSV files and plain SVG line plots."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .engine import Waveform

CSV_FORMAT = "%.8e"  # nine significant digits


def waveform_csv(w: Waveform, signals=None) -> str:
    names = list(w.names if signals is None else signals)
    missing = [s for s in names if s not in w]
    if missing:
        raise KeyError(f"unknown signal(s) {missing}")
    buf = io.StringIO()
    buf.write(",".join(["time_s"] + names) + "\n")
    cols = np.column_stack([w.time] + [w[s] for s in names])
    np.savetxt(buf, cols, fmt=CSV_FORMAT, delimiter=",", newline="\n")
    return buf.getvalue()


def write_csv(w: Waveform, path, signals=None) -> Path:
    path = Path(path)
    path.write_text(waveform_csv(w, signals), encoding="utf-8", newline="")
    return path


def read_csv(path) -> Waveform:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "time_s":
        raise ValueError(f"{path}: expected a header starting with 'time_s'")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    data = data.reshape(-1, len(header))
    return Waveform(data[:, 0], {name: data[:, k] for k, name in enumerate(header) if k})


_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def waveform_svg(w: Waveform, signals, title: str = "", width: int = 800,
                 height: int = 450) -> str:
    """SVG 1.1 document with one polyline per signal and a legend.

    Output depends only on the inputs, so repeated calls are byte-identical.
    """
    signals = list(signals)
    missing = [s for s in signals if s not in w]
    if missing:
        raise KeyError(f"unknown signal(s) {missing}; available: {', '.join(w.names)}")
    if not signals:
        raise ValueError("no signals to plot")
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    t = w.time
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0
    ys = np.concatenate([w[s] for s in signals])
    y0, y1 = float(ys.min()), float(ys.max())
    if y1 - y0 < 1e-300:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(tv):
        return left + (tv - t0) / (t1 - t0) * pw

    def py(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="{top - 10}" font-size="14">{_escape(title)}</text>')
    for k in range(6):
        tv = t0 + (t1 - t0) * k / 5
        yv = y0 + (y1 - y0) * k / 5
        out.append(f'<text x="{px(tv):.2f}" y="{top + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{_fmt(tv)}</text>')
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{_fmt(yv)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" font-size="12" '
               'text-anchor="middle">time (s)</text>')
    for k, name in enumerate(signals):
        colour = _COLOURS[k % len(_COLOURS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, w[name]))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" '
                   f'points="{pts}"/>')
        ly = top + 16 * k + 10
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="11">{_escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(w: Waveform, signals, path, title: str = "") -> Path:
    path = Path(path)
    path.write_text(waveform_svg(w, signals, title), encoding="utf-8", newline="")
    return path
