"""Deterministic SVG rendering of lineups.

The output is a small-multiples grid with identical axes in every cell,
stripped of all context: the only text nodes are the panel numbers.
Rendering the same lineup twice yields byte-identical documents, and
nothing in the markup distinguishes the data panel from the nulls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .lineup import Lineup, LineupError
from .panels import BandSeries, BoxSeries, PathSeries, PointsSeries, SegmentSeries

__all__ = ["RenderOptions", "render_svg"]

DEFAULT_PALETTE = {
    "background": "#ffffff",
    "border": "#b8b8b8",
    "points": "#39618f",
    "segments": "#444444",
    "smoother": "#b5443c",
    "line": "#666666",
    "band": "#a8c8e0",
    "box_stroke": "#333333",
    "box_fill": "#ffffff",
    "box_fill_deep": "#2a5d8f",
    "label": "#555555",
}


@dataclass(frozen=True)
class RenderOptions:
    rows: int | None = None
    cols: int | None = None
    panel_px: int = 150
    gap_px: int = 6
    margin_px: int = 8
    label_px: int = 11
    point_radius: float = 1.7
    stroke_width: float = 1.0
    palette: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    show_ids: bool = True

    def grid(self, m: int) -> tuple[int, int]:
        if self.rows is not None and self.cols is not None:
            if self.rows * self.cols < m:
                raise LineupError(f"grid {self.rows}x{self.cols} cannot hold {m} panels")
            return self.rows, self.cols
        if m == 20:
            return 4, 5
        cols = math.ceil(math.sqrt(m))
        return math.ceil(m / cols), cols


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Transform:
    """World coordinates to pixel coordinates inside one panel cell."""

    def __init__(self, x_range, y_range, size: int, label_strip: int):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.left = 3.0
        self.top = float(label_strip)
        self.w = size - 6.0
        self.h = size - label_strip - 3.0

    def x(self, v: float) -> float:
        return self.left + (v - self.x0) / (self.x1 - self.x0) * self.w

    def y(self, v: float) -> float:
        # y grows upward in data space, downward in svg space
        return self.top + (self.y1 - v) / (self.y1 - self.y0) * self.h


def _render_series(s, t: _Transform, opts: RenderOptions, out: list[str]):
    pal = opts.palette
    sw = _fmt(opts.stroke_width)
    if isinstance(s, PointsSeries):
        color = pal.get(s.role, pal["points"])
        for x, y in zip(s.x, s.y):
            out.append(f'<circle cx="{_fmt(t.x(x))}" cy="{_fmt(t.y(y))}" '
                       f'r="{_fmt(opts.point_radius)}" fill="{color}"/>')
    elif isinstance(s, SegmentSeries):
        color = pal.get(s.role, pal["segments"])
        for x0, y0, x1, y1 in zip(s.x0, s.y0, s.x1, s.y1):
            out.append(f'<line x1="{_fmt(t.x(x0))}" y1="{_fmt(t.y(y0))}" '
                       f'x2="{_fmt(t.x(x1))}" y2="{_fmt(t.y(y1))}" '
                       f'stroke="{color}" stroke-width="{sw}"/>')
    elif isinstance(s, PathSeries):
        color = pal.get(s.role, pal["line"])
        pts = " ".join(f"{_fmt(t.x(x))},{_fmt(t.y(y))}" for x, y in zip(s.x, s.y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="{_fmt(opts.stroke_width * 1.3)}"/>')
    elif isinstance(s, BandSeries):
        fwd = [f"{_fmt(t.x(x))},{_fmt(t.y(v))}" for x, v in zip(s.x, s.hi)]
        rev = [f"{_fmt(t.x(x))},{_fmt(t.y(v))}" for x, v in zip(s.x[::-1], s.lo[::-1])]
        out.append(f'<polygon points="{" ".join(fwd + rev)}" '
                   f'fill="{pal["band"]}" fill-opacity="0.45" stroke="none"/>')
    elif isinstance(s, BoxSeries):
        _render_boxes(s, t, opts, out)
    else:
        raise LineupError(f"cannot render series type {type(s).__name__}")


def _mix_hex(a: str, b: str, frac: float) -> str:
    av = [int(a[i:i + 2], 16) for i in (1, 3, 5)]
    bv = [int(b[i:i + 2], 16) for i in (1, 3, 5)]
    return "#" + "".join(f"{round(x + (y - x) * frac):02x}" for x, y in zip(av, bv))


def _render_boxes(s: BoxSeries, t: _Transform, opts: RenderOptions, out: list[str]):
    pal = opts.palette
    sw = _fmt(opts.stroke_width)
    half = s.width / 2.0
    for i, pos in enumerate(s.positions):
        if s.fill_levels is not None:
            fill = _mix_hex(pal["box_fill"], pal["box_fill_deep"], float(s.fill_levels[i]))
        else:
            fill = pal["box_fill"]
        lo, q1, med, q3, hi = s.lo[i], s.q1[i], s.med[i], s.q3[i], s.hi[i]
        if s.orient == "v":
            xl, xr = t.x(pos - half), t.x(pos + half)
            xc = t.x(pos)
            out.append(f'<line x1="{_fmt(xc)}" y1="{_fmt(t.y(lo))}" x2="{_fmt(xc)}" '
                       f'y2="{_fmt(t.y(q1))}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<line x1="{_fmt(xc)}" y1="{_fmt(t.y(q3))}" x2="{_fmt(xc)}" '
                       f'y2="{_fmt(t.y(hi))}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<rect x="{_fmt(xl)}" y="{_fmt(t.y(q3))}" '
                       f'width="{_fmt(xr - xl)}" height="{_fmt(t.y(q1) - t.y(q3))}" '
                       f'fill="{fill}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<line x1="{_fmt(xl)}" y1="{_fmt(t.y(med))}" x2="{_fmt(xr)}" '
                       f'y2="{_fmt(t.y(med))}" stroke="{pal["box_stroke"]}" '
                       f'stroke-width="{_fmt(opts.stroke_width * 1.6)}"/>')
        else:
            yt, yb = t.y(pos + half), t.y(pos - half)
            yc = t.y(pos)
            out.append(f'<line x1="{_fmt(t.x(lo))}" y1="{_fmt(yc)}" x2="{_fmt(t.x(q1))}" '
                       f'y2="{_fmt(yc)}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<line x1="{_fmt(t.x(q3))}" y1="{_fmt(yc)}" x2="{_fmt(t.x(hi))}" '
                       f'y2="{_fmt(yc)}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<rect x="{_fmt(t.x(q1))}" y="{_fmt(yt)}" '
                       f'width="{_fmt(t.x(q3) - t.x(q1))}" height="{_fmt(yb - yt)}" '
                       f'fill="{fill}" stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')
            out.append(f'<line x1="{_fmt(t.x(med))}" y1="{_fmt(yt)}" x2="{_fmt(t.x(med))}" '
                       f'y2="{_fmt(yb)}" stroke="{pal["box_stroke"]}" '
                       f'stroke-width="{_fmt(opts.stroke_width * 1.6)}"/>')
    for pos, val in zip(s.outlier_pos, s.outlier_val):
        if s.orient == "v":
            cx, cy = t.x(pos), t.y(val)
        else:
            cx, cy = t.x(val), t.y(pos)
        out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" '
                   f'r="{_fmt(opts.point_radius)}" fill="none" '
                   f'stroke="{pal["box_stroke"]}" stroke-width="{sw}"/>')


def render_svg(lineup: Lineup, opts: RenderOptions | None = None) -> str:
    """Render the grid. The document carries exactly ``m`` text nodes (the
    panel numbers; none when ``show_ids`` is off) and no reference to the
    answer."""
    opts = opts or RenderOptions()
    rows, cols = opts.grid(lineup.m)
    size = opts.panel_px
    gap, margin = opts.gap_px, opts.margin_px
    width = margin * 2 + cols * size + (cols - 1) * gap
    height = margin * 2 + rows * size + (rows - 1) * gap
    label_strip = opts.label_px + 4 if opts.show_ids else 6
    t = _Transform(lineup.x_range, lineup.y_range, size, label_strip)
    pal = opts.palette

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="{pal["background"]}"/>',
    ]
    for idx, panel in enumerate(lineup.panels, start=1):
        r, c = divmod(idx - 1, cols)
        ox = margin + c * (size + gap)
        oy = margin + r * (size + gap)
        out.append(f'<g transform="translate({ox},{oy})">')
        out.append(f'<rect x="0" y="0" width="{size}" height="{size}" '
                   f'fill="none" stroke="{pal["border"]}" stroke-width="1"/>')
        if opts.show_ids:
            out.append(f'<text x="4" y="{opts.label_px + 1}" font-family="sans-serif" '
                       f'font-size="{opts.label_px}" fill="{pal["label"]}">{idx}</text>')
        for s in panel.series:
            _render_series(s, t, opts, out)
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
