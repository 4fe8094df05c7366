"""CSV and SVG emission for learning curves and histograms.

The SVG writers are deliberately tiny: fixed canvas, one polyline or one row
of bars, min/mid/max tick labels. Enough to eyeball a run without pulling in
a plotting stack.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 36, 46  # margins: left, right, top, bottom


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write rows (str() serialization round-trips floats exactly); returns
    the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([str(v) for v in row])
            n += 1
    return n


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _span(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def _axis_text(x: float, y: float, s: str, anchor: str = "middle", size: int = 12) -> str:
    return (
        f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="monospace" '
        f'text-anchor="{anchor}">{escape(s)}</text>'
    )


def svg_line_chart(
    path: str | Path,
    xs: Sequence[float],
    ys: Sequence[float],
    title: str,
    x_label: str = "",
    y_label: str = "",
) -> None:
    """One polyline over an x/y frame; one point per (xs, ys) pair."""
    if len(xs) != len(ys) or not xs:
        raise ValueError(f"need equal nonempty xs/ys, got {len(xs)}/{len(ys)}")
    x_lo, x_hi = _span(xs)
    y_lo, y_hi = _span(ys)

    def sx(v: float) -> float:
        return ML + (v - x_lo) / (x_hi - x_lo) * (W - ML - MR)

    def sy(v: float) -> float:
        return H - MB - (v - y_lo) / (y_hi - y_lo) * (H - MT - MB)

    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        _axis_text(W / 2, MT - 14, title, size=14),
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
        _axis_text(ML, H - MB + 16, f"{x_lo:g}"),
        _axis_text(W - MR, H - MB + 16, f"{x_hi:g}"),
        _axis_text(ML - 6, H - MB + 4, f"{y_lo:.4g}", anchor="end"),
        _axis_text(ML - 6, MT + 4, f"{y_hi:.4g}", anchor="end"),
        _axis_text(W / 2, H - 8, x_label),
        _axis_text(14, H / 2, y_label, size=12),
        f'<polyline fill="none" stroke="#1f6fb2" stroke-width="1.5" points="{points}"/>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n")


def svg_bar_chart(
    path: str | Path, labels: Sequence[str], values: Sequence[float], title: str
) -> None:
    if len(labels) != len(values) or not labels:
        raise ValueError("need equal nonempty labels/values")
    v_hi = max(max(values), 1e-12)
    n = len(values)
    slot = (W - ML - MR) / n
    bar_w = slot * 0.7
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        _axis_text(W / 2, MT - 14, title, size=14),
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
    ]
    for i, (label, v) in enumerate(zip(labels, values)):
        x = ML + i * slot + (slot - bar_w) / 2
        h = (v / v_hi) * (H - MT - MB)
        y = H - MB - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
            f'fill="#1f6fb2"/>'
        )
        if n <= 24 or i % max(1, n // 12) == 0:
            parts.append(_axis_text(x + bar_w / 2, H - MB + 16, label, size=10))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
