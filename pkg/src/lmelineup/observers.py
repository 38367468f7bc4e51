"""Simulated lineup observers.

Two kinds: discrepancy observers score every panel with a design-specific
summary and pick the maximum (stand-ins for attentive humans in power
studies), and accuracy observers pick the data panel with a fixed
probability (throughput drivers for end-to-end service tests).
"""

from __future__ import annotations

import numpy as np

from .lineup import Lineup
from .panels import BoxSeries, PanelData, PathSeries, PointsSeries, SegmentSeries

__all__ = [
    "panel_score",
    "pick_most_discrepant",
    "accuracy_pick",
]


def _only(panel: PanelData, cls):
    for s in panel.series:
        if isinstance(s, cls):
            return s
    raise ValueError(f"panel {panel.kind!r} has no {cls.__name__}")


def _fanned_score(panel: PanelData) -> float:
    seg = _only(panel, SegmentSeries)
    slopes = (seg.y1 - seg.y0) / (seg.x1 - seg.x0)
    return float(slopes.std())


def _box_spread_score(panel: PanelData) -> float:
    # heterogeneity of spread between groups
    box = _only(panel, BoxSeries)
    iqr = np.maximum(box.q3 - box.q1, 1e-12)
    return float(np.log(iqr).std())


def _box_trend_score(panel: PanelData) -> float:
    # location differences between groups, in units of a typical spread
    box = _only(panel, BoxSeries)
    scale = float(np.median(np.maximum(box.q3 - box.q1, 1e-12)))
    return float(box.med.std() / scale)


def _smoother(panel: PanelData) -> PathSeries:
    for s in panel.series:
        if isinstance(s, PathSeries) and s.role == "smoother":
            return s
    raise ValueError("panel has no smoother path")


def _scatter_trend_score(panel: PanelData) -> float:
    # curvature: departure of the smoother from its own straight-line fit
    sm = _smoother(panel)
    pts = _only(panel, PointsSeries)
    slope, icept = np.polyfit(sm.x, sm.y, 1)
    dev = sm.y - (icept + slope * sm.x)
    resid_scale = float(pts.y.std()) or 1.0
    return float(np.sqrt(np.mean(dev ** 2)) / resid_scale)


def _scatter_spread_score(panel: PanelData) -> float:
    # does scatter around the smoother widen along x?
    sm = _smoother(panel)
    pts = _only(panel, PointsSeries)
    fit_at = np.interp(pts.x, sm.x, sm.y)
    adev = np.abs(pts.y - fit_at)
    if adev.std() == 0.0 or pts.x.std() == 0.0:
        return 0.0
    return float(abs(np.corrcoef(pts.x, adev)[0, 1]))


def _qq_score(panel: PanelData) -> float:
    # outlier/spread reading: heavy tails blow up the cubed deviation, and
    # panels share axes so scale differences register directly
    pts = _only(panel, PointsSeries)
    return float(np.mean(np.abs(pts.y - np.median(pts.y)) ** 3))


def _qq_band_score(panel: PanelData) -> float:
    # worst band exceedance of the ordered sample, scale-free
    band = next(s for s in panel.series if s.role == "band")
    line = next(s for s in panel.series if isinstance(s, PathSeries) and s.role == "line")
    pts = _only(panel, PointsSeries)
    half = (band.hi - band.lo) / 2.0
    ratio = np.abs(pts.y - line.y) / np.maximum(half, 1e-12)
    return float(ratio.max())


def _re_corr_score(panel: PanelData) -> float:
    pts = _only(panel, PointsSeries)
    if pts.x.std() == 0.0 or pts.y.std() == 0.0:
        return 0.0
    return float(abs(np.corrcoef(pts.x, pts.y)[0, 1]))


def _dot_spread_score(panel: PanelData) -> float:
    pts = _only(panel, PointsSeries)
    groups = np.round(pts.x).astype(int)
    spreads = []
    for gidx in np.unique(groups):
        v = pts.y[groups == gidx]
        if len(v) >= 3:
            spreads.append(np.log(max(v.std(), 1e-12)))
    if len(spreads) < 2:
        return 0.0
    return float(np.std(spreads))


_SCORERS = {
    "fanned_lines": _fanned_score,
    "cyclone": _box_spread_score,
    "boxplots": _box_trend_score,
    "scatter_smooth": _scatter_trend_score,
    "qq": _qq_score,
    "re_scatter": _re_corr_score,
    "dotplot": _dot_spread_score,
}

# alternate readings of the same display
ALT_SCORERS = {
    "scatter_smooth": _scatter_spread_score,
    "qq": _qq_band_score,
}


def panel_score(panel: PanelData, aspect: str = "default") -> float:
    """Design-appropriate discrepancy score of a single panel."""
    if aspect == "alt" and panel.kind in ALT_SCORERS:
        return ALT_SCORERS[panel.kind](panel)
    try:
        return _SCORERS[panel.kind](panel)
    except KeyError:
        raise ValueError(f"no scorer for panel kind {panel.kind!r}") from None


def pick_most_discrepant(lineup: Lineup, aspect: str = "default") -> int:
    """1-based index of the panel maximizing the design's score; ties go to
    the lowest index."""
    scores = [panel_score(p, aspect) for p in lineup.panels]
    return int(np.argmax(scores)) + 1


def accuracy_pick(rng: np.random.Generator, m: int, answer_index: int,
                  accuracy: float) -> int:
    """Pick the data panel with probability ``accuracy``, otherwise one of
    the other panels uniformly."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError("accuracy must be in [0, 1]")
    if rng.random() < accuracy:
        return answer_index
    others = [i for i in range(1, m + 1) if i != answer_index]
    return int(others[rng.integers(0, len(others))])
