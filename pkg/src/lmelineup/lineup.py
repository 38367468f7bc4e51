"""Lineup assembly: one data panel hidden among null panels, shared axes,
and a sealed answer that is only disclosed through an explicit, logged
reveal call.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .panels import PanelData, series_bounds

__all__ = ["Lineup", "LineupError", "build_lineup", "reveal", "lineup_metadata"]

log = logging.getLogger("lmelineup.reveal")

_AXIS_PAD = 0.04


class LineupError(ValueError):
    pass


@dataclass(frozen=True)
class Lineup:
    panels: tuple[PanelData, ...]
    m: int
    seed: int
    kind: str
    replicate_id: str
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    _answer_index: int = field(repr=False, default=0)


def build_lineup(data_panel: PanelData, null_panels: Sequence[PanelData], seed: int,
                 m: int = 20, replicate_id: str = "r1") -> Lineup:
    """Place the data panel at a seed-determined uniform position among the
    nulls and freeze axis ranges over every panel."""
    null_panels = tuple(null_panels)
    if len(null_panels) != m - 1:
        raise LineupError(f"expected {m - 1} null panels, got {len(null_panels)}")
    kinds = {p.kind for p in null_panels} | {data_panel.kind}
    if len(kinds) != 1:
        raise LineupError(f"mixed panel kinds in one lineup: {sorted(kinds)}")

    rng = np.random.default_rng(seed)
    answer = int(rng.integers(1, m + 1))
    panels = list(null_panels)
    panels.insert(answer - 1, data_panel)

    bounds = [series_bounds(p) for p in panels]
    xmin = min(b[0] for b in bounds)
    xmax = max(b[1] for b in bounds)
    ymin = min(b[2] for b in bounds)
    ymax = max(b[3] for b in bounds)
    xpad = (xmax - xmin or 1.0) * _AXIS_PAD
    ypad = (ymax - ymin or 1.0) * _AXIS_PAD
    return Lineup(
        panels=tuple(panels),
        m=m,
        seed=seed,
        kind=data_panel.kind,
        replicate_id=replicate_id,
        x_range=(xmin - xpad, xmax + xpad),
        y_range=(ymin - ypad, ymax + ypad),
        _answer_index=answer,
    )


def reveal(lineup: Lineup, confirm: bool = False) -> int:
    """Disclose the data panel's position. Requires an explicit confirm flag
    so a self-blinded modeler cannot unblind accidentally; every disclosure
    is written to the audit log. Repeated calls return the same index."""
    if not confirm:
        raise LineupError("reveal requires confirm=True")
    log.info("reveal kind=%s replicate=%s seed=%d answer=%d",
             lineup.kind, lineup.replicate_id, lineup.seed, lineup._answer_index)
    return lineup._answer_index


def lineup_metadata(lineup: Lineup) -> str:
    """Sidecar JSON for a rendered lineup; deliberately free of the answer
    (that lives in a separate keyed answers file)."""
    return json.dumps({
        "kind": lineup.kind,
        "m": lineup.m,
        "seed": lineup.seed,
        "replicate_id": lineup.replicate_id,
    }, sort_keys=True)
