"""Minimal SVG line charts for loss and validation curves."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape


def read_series(path, x_col: str, y_col: str) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or x_col not in reader.fieldnames or y_col not in reader.fieldnames:
            raise ValueError(f"{path} lacks columns {x_col!r} and {y_col!r}")
        for row in reader:
            y = float(row[y_col])
            if math.isfinite(y):
                xs.append(float(row[x_col]))
                ys.append(y)
    return xs, ys


def line_chart_svg(xs, ys, title: str = "", x_label: str = "", y_label: str = "",
                   width: int = 640, height: int = 400) -> str:
    if not xs:
        raise ValueError("nothing to plot")
    left, right, top, bottom = 70, 20, 40, 50
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    ticks = []
    for i in range(5):
        fy = y0 + (y1 - y0) * i / 4
        fx = x0 + (x1 - x0) * i / 4
        ticks.append(f'<text x="{left - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end">{fy:.4g}</text>')
        ticks.append(f'<text x="{sx(fx):.1f}" y="{top + ph + 18}" text-anchor="middle">{fx:.4g}</text>')
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        *ticks,
        f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(x_label)}</text>',
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">{escape(y_label)}</text>',
        f'<polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{points}"/>',
        "</svg>",
    ])


def plot_csv(csv_path, out_path, x_col: str = "iteration", y_col: str = "loss") -> None:
    xs, ys = read_series(csv_path, x_col, y_col)
    svg = line_chart_svg(xs, ys, Path(csv_path).name, x_col, y_col)
    Path(out_path).write_text(svg)
