"""Panel data for the lineup designs.

Each builder reduces raw values to plot primitives carrying numeric
coordinates only (points, segments, polyline paths, band polygons, box
summaries). Builders are pure: identical inputs give identical panels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .fit import ResidualSet

__all__ = [
    "PanelError",
    "PointsSeries",
    "SegmentSeries",
    "PathSeries",
    "BandSeries",
    "BoxSeries",
    "PanelData",
    "panel_fanned_lines",
    "panel_boxplots",
    "panel_dotplot",
    "panel_scatter_smooth",
    "panel_qq",
    "panel_re_scatter",
    "series_bounds",
]


class PanelError(ValueError):
    pass


@dataclass(frozen=True)
class PointsSeries:
    x: np.ndarray
    y: np.ndarray
    role: str = "points"


@dataclass(frozen=True)
class SegmentSeries:
    x0: np.ndarray
    y0: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    role: str = "segments"


@dataclass(frozen=True)
class PathSeries:
    x: np.ndarray
    y: np.ndarray
    role: str = "path"


@dataclass(frozen=True)
class BandSeries:
    x: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    role: str = "band"


@dataclass(frozen=True)
class BoxSeries:
    """Five-number summaries at integer positions 1..k along the category
    axis. ``orient`` 'v' draws value on y, 'h' draws value on x."""

    positions: np.ndarray
    lo: np.ndarray
    q1: np.ndarray
    med: np.ndarray
    q3: np.ndarray
    hi: np.ndarray
    outlier_pos: np.ndarray
    outlier_val: np.ndarray
    fill_levels: np.ndarray | None = None
    orient: str = "v"
    width: float = 0.7
    role: str = "boxes"


@dataclass(frozen=True)
class PanelData:
    kind: str
    series: tuple
    dropped: int = 0

    def __post_init__(self):
        for s in self.series:
            for name in ("x", "y", "x0", "x1", "y0", "y1", "lo", "hi", "q1", "med", "q3",
                         "positions", "outlier_pos", "outlier_val"):
                arr = getattr(s, name, None)
                if arr is not None and len(arr) and not np.all(np.isfinite(arr)):
                    raise PanelError(f"non-finite coordinate in {s.role} series")


# ---------------------------------------------------------------------------
# Builders


def panel_fanned_lines(groups: Sequence[tuple[np.ndarray, np.ndarray]]) -> PanelData:
    """One least-squares segment per group, spanning that group's observed
    x range. Groups with fewer than two distinct x values are skipped and
    counted in ``dropped``."""
    x0s, y0s, x1s, y1s = [], [], [], []
    dropped = 0
    for x, y in groups:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(x) < 2 or np.ptp(x) == 0.0:
            dropped += 1
            continue
        slope, icept = np.polyfit(x, y, 1)
        lo, hi = float(x.min()), float(x.max())
        x0s.append(lo)
        y0s.append(icept + slope * lo)
        x1s.append(hi)
        y1s.append(icept + slope * hi)
    if not x0s:
        raise PanelError("no group has two distinct x values")
    seg = SegmentSeries(np.array(x0s), np.array(y0s), np.array(x1s), np.array(y1s))
    return PanelData(kind="fanned_lines", series=(seg,), dropped=dropped)


def _five_numbers(v: np.ndarray):
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])  # linear interpolation
    iqr = q3 - q1
    in_lo = v[v >= q1 - 1.5 * iqr]
    in_hi = v[v <= q3 + 1.5 * iqr]
    lo = float(in_lo.min())
    hi = float(in_hi.max())
    outliers = v[(v < lo) | (v > hi)]
    return lo, float(q1), float(med), float(q3), hi, outliers, float(iqr)


def panel_boxplots(values: Sequence[float], factor: Sequence, order: str = "as_is",
                   min_group: int = 5, orient: str = "v",
                   fill_ramp: bool = False) -> PanelData:
    """Side-by-side box plots of ``values`` split by ``factor``.

    Groups with fewer than ``min_group`` observations are dropped (boxes of
    a handful of points are not meaningful). ``order='by_iqr'`` sorts boxes
    by ascending interquartile range, ties broken by group label, which
    turns the panel into the funnel shape used for between-group spread
    comparisons. ``fill_ramp`` encodes rendered position as a deepening
    fill, preserving an impression of a continuous covariate.
    """
    if order not in ("as_is", "by_iqr"):
        raise PanelError(f"unknown box order {order!r}")
    if orient not in ("v", "h"):
        raise PanelError(f"unknown orientation {orient!r}")
    values = np.asarray(values, dtype=float)
    factor = np.asarray(factor)
    if len(values) != len(factor):
        raise PanelError("values and factor must have equal length")
    levels = sorted(set(factor.tolist()), key=str)
    summaries = []
    dropped = 0
    for lev in levels:
        v = values[factor == lev]
        if len(v) < min_group:
            dropped += 1
            continue
        summaries.append((str(lev), _five_numbers(v)))
    if not summaries:
        raise PanelError(f"no group has at least {min_group} observations")
    if order == "by_iqr":
        summaries.sort(key=lambda item: (item[1][6], item[0]))
    k = len(summaries)
    fn = [s for _, s in summaries]
    outlier_pos, outlier_val = [], []
    for idx, s in enumerate(fn, start=1):
        for o in s[5]:
            outlier_pos.append(float(idx))
            outlier_val.append(float(o))
    box = BoxSeries(
        positions=np.arange(1, k + 1, dtype=float),
        lo=np.array([s[0] for s in fn]),
        q1=np.array([s[1] for s in fn]),
        med=np.array([s[2] for s in fn]),
        q3=np.array([s[3] for s in fn]),
        hi=np.array([s[4] for s in fn]),
        outlier_pos=np.array(outlier_pos),
        outlier_val=np.array(outlier_val),
        fill_levels=(np.linspace(0.0, 1.0, k) if fill_ramp and k > 1 else None),
        orient=orient,
    )
    kind = "cyclone" if order == "by_iqr" else "boxplots"
    return PanelData(kind=kind, series=(box,), dropped=dropped)


def panel_dotplot(values: Sequence[float], factor: Sequence,
                  jitter: float = 0.22) -> PanelData:
    """Jittered points of ``values`` by group; the underpowered sibling of
    the box-plot design, kept for comparison studies."""
    values = np.asarray(values, dtype=float)
    factor = np.asarray(factor)
    levels = sorted(set(factor.tolist()), key=str)
    rng = np.random.default_rng(0)  # fixed: jitter is cosmetic, output stays pure
    xs, ys = [], []
    for idx, lev in enumerate(levels, start=1):
        v = values[factor == lev]
        xs.append(idx + rng.uniform(-jitter, jitter, len(v)))
        ys.append(v)
    return PanelData(kind="dotplot",
                     series=(PointsSeries(np.concatenate(xs), np.concatenate(ys)),))


def _tricube(u: np.ndarray) -> np.ndarray:
    out = np.clip(1.0 - np.abs(u) ** 3, 0.0, None) ** 3
    return out


def panel_scatter_smooth(x: Sequence[float], y: Sequence[float], span: float = 0.75,
                         grid_points: int = 80) -> PanelData:
    """Scatter of (x, y) plus a local-linear smoother with tricube weights.

    At each of ``grid_points`` locations across the x range, a weighted
    linear fit uses the nearest ceil(span*n) points, with weights decaying
    by the tricube kernel of normalized distance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 10:
        raise PanelError("need at least 10 points")
    if np.ptp(x) == 0.0:
        raise PanelError("x is constant")
    grid = np.linspace(x.min(), x.max(), grid_points)
    k = max(2, math.ceil(span * n))
    fitted = np.empty(grid_points)
    for j, g in enumerate(grid):
        dist = np.abs(x - g)
        h = np.partition(dist, k - 1)[k - 1]
        if h == 0.0:
            h = max(dist.max(), 1e-12)
        w = _tricube(dist / h)
        sw = w.sum()
        xw = (w * x).sum() / sw
        yw = (w * y).sum() / sw
        sxx = (w * (x - xw) ** 2).sum()
        if sxx <= 1e-12 * max(1.0, xw * xw):
            fitted[j] = yw
        else:
            slope = (w * (x - xw) * (y - yw)).sum() / sxx
            fitted[j] = yw + slope * (g - xw)
    return PanelData(kind="scatter_smooth",
                     series=(PointsSeries(x.copy(), y.copy()),
                             PathSeries(grid, fitted, role="smoother")))


def panel_qq(sample: Sequence[float], band_level: float = 0.95) -> PanelData:
    """Normal quantile-quantile panel: ordered sample against normal
    quantiles at (i - 0.5)/n, a reference line through the quartile pair,
    and pointwise order-statistic bands around the line."""
    s = np.sort(np.asarray(sample, dtype=float))
    n = len(s)
    if n < 8:
        raise PanelError("need at least 8 observations")
    if np.ptp(s) == 0.0:
        raise PanelError("sample is constant")
    if not 0.0 < band_level < 1.0:
        raise PanelError("band level must be inside (0, 1)")
    prob = (np.arange(1, n + 1) - 0.5) / n
    z = special.ndtri(prob)
    # both quartile coordinates interpolated on the plotting-position scale,
    # so a sample equal to its theoretical quantiles sits exactly on the line
    zq1, zq3 = np.interp([0.25, 0.75], prob, z)
    sq1, sq3 = np.interp([0.25, 0.75], prob, s)
    slope = (sq3 - sq1) / (zq3 - zq1)
    icept = sq1 - slope * zq1
    line = icept + slope * z
    zcrit = special.ndtri((1.0 + band_level) / 2.0)
    dens = np.exp(-0.5 * z ** 2) / math.sqrt(2.0 * math.pi)
    half = zcrit * (s.std(ddof=1) / dens) * np.sqrt(prob * (1.0 - prob) / n)
    return PanelData(kind="qq", series=(
        BandSeries(z, line - half, line + half),
        PathSeries(z, line, role="line"),
        PointsSeries(z, s),
    ))


def panel_re_scatter(residset: ResidualSet) -> PanelData:
    """Predicted random effects: first component on x, second on y, with a
    simple regression line; the line's slope carries the correlation
    signal."""
    b = residset.level2_matrix()
    if b.shape[1] < 2:
        raise PanelError("need at least two random-effect components")
    x, y = b[:, 0], b[:, 1]
    if np.ptp(x) == 0.0:
        raise PanelError("first component is degenerate")
    slope, icept = np.polyfit(x, y, 1)
    gx = np.array([x.min(), x.max()])
    return PanelData(kind="re_scatter", series=(
        PointsSeries(x.copy(), y.copy()),
        PathSeries(gx, icept + slope * gx, role="line"),
    ))


# ---------------------------------------------------------------------------
# Bounds


def series_bounds(panel: PanelData) -> tuple[float, float, float, float]:
    """(xmin, xmax, ymin, ymax) over every coordinate the panel plots."""
    xs, ys = [], []
    for s in panel.series:
        if isinstance(s, PointsSeries):
            xs += [s.x.min(), s.x.max()]
            ys += [s.y.min(), s.y.max()]
        elif isinstance(s, SegmentSeries):
            xs += [s.x0.min(), s.x0.max(), s.x1.min(), s.x1.max()]
            ys += [s.y0.min(), s.y0.max(), s.y1.min(), s.y1.max()]
        elif isinstance(s, PathSeries):
            xs += [s.x.min(), s.x.max()]
            ys += [s.y.min(), s.y.max()]
        elif isinstance(s, BandSeries):
            xs += [s.x.min(), s.x.max()]
            ys += [s.lo.min(), s.hi.max()]
        elif isinstance(s, BoxSeries):
            pos_lo = s.positions.min() - s.width
            pos_hi = s.positions.max() + s.width
            val_lo = min(s.lo.min(), s.outlier_val.min() if len(s.outlier_val) else np.inf)
            val_hi = max(s.hi.max(), s.outlier_val.max() if len(s.outlier_val) else -np.inf)
            if s.orient == "v":
                xs += [pos_lo, pos_hi]
                ys += [val_lo, val_hi]
            else:
                xs += [val_lo, val_hi]
                ys += [pos_lo, pos_hi]
        else:
            raise PanelError(f"unknown series type {type(s).__name__}")
    return float(min(xs)), float(max(xs)), float(min(ys)), float(max(ys))
