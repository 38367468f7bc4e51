"""Lineup study storage and reporting.

A study directory holds a manifest, one SVG and one metadata sidecar per
lineup, an append-only pick log, and a separate answers file. The serving
paths (``next_lineup``, ``submit_pick``) never read the answers file; only
``reveal`` and ``report`` do, so nothing an observer receives can encode
the data panel's position.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .lineup import Lineup, reveal as lineup_reveal
from .pvalue import (REASONS, EvaluationSet, Pick, combined_pvalue,
                     visual_pvalue_mc)
from .svg import RenderOptions, render_svg

__all__ = [
    "LineupAsset",
    "DesignEntry",
    "StudyConfig",
    "PickRecord",
    "StudyReport",
    "StudyError",
    "StudyStore",
    "assets_from_lineups",
    "significance_code",
]

SIGNIFICANCE_CUTS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "."))


class StudyError(ValueError):
    pass


def significance_code(p: float) -> str:
    for cut, code in SIGNIFICANCE_CUTS:
        if p <= cut:
            return code
    return ""


@dataclass(frozen=True)
class LineupAsset:
    lineup_id: str
    design_kind: str
    source_id: str
    replicate_id: str
    m: int
    seed: int
    svg: str
    answer_index: int

    def __post_init__(self):
        if not 1 <= self.answer_index <= self.m:
            raise StudyError("answer index outside panel range")


def assets_from_lineups(design_kind: str, source_id: str, lineups: Sequence[Lineup],
                        opts: RenderOptions | None = None) -> list[LineupAsset]:
    """Render replicate lineups of one data source into servable assets."""
    assets = []
    for lu in lineups:
        assets.append(LineupAsset(
            lineup_id=f"{design_kind}-{source_id}-{lu.replicate_id}",
            design_kind=design_kind,
            source_id=source_id,
            replicate_id=lu.replicate_id,
            m=lu.m,
            seed=lu.seed,
            svg=render_svg(lu, opts),
            answer_index=lineup_reveal(lu, confirm=True),
        ))
    return assets


@dataclass(frozen=True)
class DesignEntry:
    kind: str
    source_id: str
    assets: tuple[LineupAsset, ...]


@dataclass(frozen=True)
class StudyConfig:
    study_id: str
    designs: tuple[DesignEntry, ...]
    session_cap: int = 10
    serve_seed: int = 0


@dataclass(frozen=True)
class PickRecord:
    study_id: str
    lineup_id: str
    observer_id: str
    panel_index: int
    reasons: tuple[str, ...] = ()
    other_text: str = ""
    confidence: int = 3
    duration_seconds: float = 0.0
    timestamp: float = 0.0


@dataclass(frozen=True)
class ReplicateRow:
    design_kind: str
    source_id: str
    lineup_id: str
    replicate_id: str
    x: int
    K: int
    p: float | None
    code: str


@dataclass(frozen=True)
class DesignRow:
    design_kind: str
    source_id: str
    combined_p: float | None
    reason_percent: dict[str, float]


@dataclass(frozen=True)
class StudyReport:
    study_id: str
    replicates: tuple[ReplicateRow, ...]
    designs: tuple[DesignRow, ...]
    reps_single: int
    reps_combined: int
    seed: int

    def to_json(self) -> str:
        return json.dumps({
            "study_id": self.study_id,
            "seed": self.seed,
            "reps_single": self.reps_single,
            "reps_combined": self.reps_combined,
            "replicates": [asdict(r) for r in self.replicates],
            "designs": [asdict(d) for d in self.designs],
        }, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"study {self.study_id}",
                 f"{'design':<14}{'replicate':<11}{'x/K':>8}  {'p':>8}  code"]
        for r in self.replicates:
            p = "-" if r.p is None else f"{r.p:.4f}"
            lines.append(f"{r.design_kind:<14}{r.replicate_id:<11}"
                         f"{r.x}/{r.K:>4}  {p:>8}  {r.code}")
        for d in self.designs:
            p = "-" if d.combined_p is None else f"{d.combined_p:.4f}"
            lines.append(f"{d.design_kind:<14}{'combined':<11}{'':>8}  {p:>8}")
            if d.reason_percent:
                pct = "  ".join(f"{k}={v:.1f}%" for k, v in d.reason_percent.items())
                lines.append(f"{'':<14}reasons    {pct}")
        return "\n".join(lines) + "\n"


class StudyStore:
    """File-backed store. Pick submissions funnel through one writer lock;
    reads take a consistent snapshot of the append-only log."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    # -- paths ------------------------------------------------------------

    def _study_dir(self, study_id: str) -> Path:
        d = self.root / "studies" / study_id
        if not d.exists():
            raise StudyError(f"no study named {study_id!r}")
        return d

    def _manifest(self, study_id: str) -> dict:
        return json.loads((self._study_dir(study_id) / "manifest.json").read_text())

    # -- creation ----------------------------------------------------------

    def create_study(self, config: StudyConfig) -> dict:
        d = self.root / "studies" / config.study_id
        if d.exists():
            raise StudyError(f"study {config.study_id!r} already exists")
        seen_ids = set()
        for entry in config.designs:
            for a in entry.assets:
                if a.lineup_id in seen_ids:
                    raise StudyError(f"duplicate lineup id {a.lineup_id!r}")
                seen_ids.add(a.lineup_id)
        (d / "lineups").mkdir(parents=True)
        manifest = {
            "study_id": config.study_id,
            "session_cap": config.session_cap,
            "serve_seed": config.serve_seed,
            "lineups": [],
        }
        answers = {}
        for entry in config.designs:
            for a in entry.assets:
                (d / "lineups" / f"{a.lineup_id}.svg").write_text(a.svg)
                sidecar = {"lineup_id": a.lineup_id, "design_kind": a.design_kind,
                           "source_id": a.source_id, "replicate_id": a.replicate_id,
                           "m": a.m, "seed": a.seed}
                (d / "lineups" / f"{a.lineup_id}.json").write_text(
                    json.dumps(sidecar, sort_keys=True))
                manifest["lineups"].append(sidecar)
                answers[a.lineup_id] = a.answer_index
        (d / "manifest.json").write_text(json.dumps(manifest, sort_keys=True))
        # answers live apart from everything the serve path touches
        (d / "answers.json").write_text(json.dumps(answers, sort_keys=True))
        (d / "picks.ndjson").touch()
        (d / "served.ndjson").touch()
        (d / "reveals.ndjson").touch()
        return manifest

    # -- log access ---------------------------------------------------------

    def _read_ndjson(self, study_id: str, name: str) -> list[dict]:
        text = (self._study_dir(study_id) / name).read_text()
        return [json.loads(line) for line in text.splitlines() if line.strip()]

    def _append_ndjson(self, study_id: str, name: str, record: dict):
        line = json.dumps(record, sort_keys=True)
        with self._write_lock:
            with (self._study_dir(study_id) / name).open("a") as fh:
                fh.write(line + "\n")
                fh.flush()

    def picks(self, study_id: str) -> list[PickRecord]:
        out = []
        for rec in self._read_ndjson(study_id, "picks.ndjson"):
            out.append(PickRecord(
                study_id=study_id,
                lineup_id=rec["lineup_id"],
                observer_id=rec["observer_id"],
                panel_index=rec["panel_index"],
                reasons=tuple(rec.get("reasons", ())),
                other_text=rec.get("other_text", ""),
                confidence=rec.get("confidence", 3),
                duration_seconds=rec.get("duration_seconds", 0.0),
                timestamp=rec.get("timestamp", 0.0),
            ))
        return out

    # -- serving -------------------------------------------------------------

    def next_lineup(self, study_id: str, observer_id: str) -> tuple[str, str] | None:
        """Serve a lineup this observer may still evaluate, preferring the
        least-evaluated ones; None when the observer is done. Each data
        source is shown to an observer at most once, so dependent replicate
        lineups of the same source can never both reach one person."""
        manifest = self._manifest(study_id)
        served = self._read_ndjson(study_id, "served.ndjson")
        mine = [s for s in served if s["observer_id"] == observer_id]
        if len(mine) >= manifest["session_cap"]:
            return None
        seen_sources = {s["source_id"] for s in mine}
        counts: dict[str, int] = {}
        for s in served:
            counts[s["lineup_id"]] = counts.get(s["lineup_id"], 0) + 1
        eligible = [lu for lu in manifest["lineups"] if lu["source_id"] not in seen_sources]
        if not eligible:
            return None
        fewest = min(counts.get(lu["lineup_id"], 0) for lu in eligible)
        pool = [lu for lu in eligible if counts.get(lu["lineup_id"], 0) == fewest]
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=manifest["serve_seed"],
                                   spawn_key=(len(served),)))
        chosen = pool[int(rng.integers(0, len(pool)))]
        self._append_ndjson(study_id, "served.ndjson", {
            "observer_id": observer_id,
            "lineup_id": chosen["lineup_id"],
            "source_id": chosen["source_id"],
            "timestamp": time.time(),
        })
        svg = (self._study_dir(study_id) / "lineups" / f"{chosen['lineup_id']}.svg").read_text()
        return chosen["lineup_id"], svg

    def submit_pick(self, record: PickRecord) -> dict:
        manifest = self._manifest(record.study_id)
        by_id = {lu["lineup_id"]: lu for lu in manifest["lineups"]}
        if record.lineup_id not in by_id:
            raise StudyError(f"unknown lineup {record.lineup_id!r}")
        m = by_id[record.lineup_id]["m"]
        if not 1 <= record.panel_index <= m:
            raise StudyError(f"panel index {record.panel_index} outside 1..{m}")
        for r in record.reasons:
            if r not in REASONS:
                raise StudyError(f"unknown reason tag {r!r}")
        if not 1 <= record.confidence <= 5:
            raise StudyError("confidence must be in 1..5")
        served = self._read_ndjson(record.study_id, "served.ndjson")
        was_served = any(s["observer_id"] == record.observer_id
                         and s["lineup_id"] == record.lineup_id for s in served)
        if not was_served:
            raise StudyError("lineup was not served to this observer")
        for p in self.picks(record.study_id):
            if p.observer_id == record.observer_id and p.lineup_id == record.lineup_id:
                raise StudyError("this observer already answered this lineup")
        rec = asdict(record)
        rec.pop("study_id")
        if not rec["timestamp"]:
            rec["timestamp"] = time.time()
        rec["reasons"] = list(record.reasons)
        self._append_ndjson(record.study_id, "picks.ndjson", rec)
        K = sum(1 for p in self.picks(record.study_id) if p.lineup_id == record.lineup_id)
        return {"ok": True, "lineup_id": record.lineup_id, "K": K}

    # -- disclosure ------------------------------------------------------------

    def answers(self, study_id: str) -> dict[str, int]:
        return json.loads((self._study_dir(study_id) / "answers.json").read_text())

    def reveal(self, study_id: str, lineup_id: str, observer_id: str,
               confirm: bool) -> dict:
        if not confirm:
            raise StudyError("reveal requires an explicit confirm token")
        manifest = self._manifest(study_id)
        by_id = {lu["lineup_id"]: lu for lu in manifest["lineups"]}
        if lineup_id not in by_id:
            raise StudyError(f"unknown lineup {lineup_id!r}")
        pick = None
        for p in self.picks(study_id):
            if p.observer_id == observer_id and p.lineup_id == lineup_id:
                pick = p
                break
        if pick is None:
            raise StudyError("reveal is only allowed after a committed pick")
        answer = self.answers(study_id)[lineup_id]
        self._append_ndjson(study_id, "reveals.ndjson", {
            "observer_id": observer_id,
            "lineup_id": lineup_id,
            "timestamp": time.time(),
        })
        recs = [p for p in self.picks(study_id) if p.lineup_id == lineup_id]
        K = len(recs)
        x = sum(1 for r in recs if r.panel_index == answer)
        running = visual_pvalue_mc(x, K, by_id[lineup_id]["m"], reps=10 ** 5, seed=0)
        return {"lineup_id": lineup_id, "answer_index": answer,
                "correct": pick.panel_index == answer,
                "x": x, "K": K, "p": running.p}

    # -- reporting ---------------------------------------------------------------

    def report(self, study_id: str, reps_single: int = 10 ** 6,
               reps_combined: int = 10 ** 5, seed: int = 0) -> StudyReport:
        """Aggregate the pick log into per-replicate and per-design rows.
        Deterministic given the log contents and the report seed."""
        manifest = self._manifest(study_id)
        answers = self.answers(study_id)
        picks = self.picks(study_id)  # snapshot: one read of the log

        by_lineup: dict[str, list[PickRecord]] = {}
        for p in picks:
            by_lineup.setdefault(p.lineup_id, []).append(p)

        replicate_rows = []
        design_groups: dict[tuple[str, str], list[dict]] = {}
        for lu in manifest["lineups"]:
            design_groups.setdefault((lu["design_kind"], lu["source_id"]), []).append(lu)

        design_rows = []
        for (kind, source), lus in sorted(design_groups.items()):
            xs, Ks = [], []
            all_picks: list[Pick] = []
            m = lus[0]["m"]
            answer_for_reasons: list[tuple[EvaluationSet, int]] = []
            for lu in sorted(lus, key=lambda u: u["replicate_id"]):
                lid = lu["lineup_id"]
                recs = by_lineup.get(lid, [])
                K = len(recs)
                x = sum(1 for r in recs if r.panel_index == answers[lid])
                pv = visual_pvalue_mc(x, K, lu["m"], reps=reps_single, seed=seed)
                p, code = pv.p, significance_code(pv.p)
                if K > 0:
                    xs.append(x)
                    Ks.append(K)
                replicate_rows.append(ReplicateRow(
                    design_kind=kind, source_id=source, lineup_id=lid,
                    replicate_id=lu["replicate_id"], x=x, K=K, p=p, code=code))
                ev = EvaluationSet(lineup_id=lid, m=lu["m"], picks=tuple(
                    Pick(observer_id=r.observer_id, panel_index=r.panel_index,
                         reasons=r.reasons, other_text=r.other_text,
                         confidence=r.confidence,
                         duration_seconds=r.duration_seconds)
                    for r in recs))
                answer_for_reasons.append((ev, answers[lid]))
            if Ks:
                combined = combined_pvalue(sum(xs), Ks, m, reps=reps_combined, seed=seed)
                combined_p = combined.p
            else:
                combined_p = None
            # pool reason tallies over the replicates of this design
            merged: dict[str, list[tuple[int, int]]] = {}
            for ev, ans in answer_for_reasons:
                for reason, (hits, total) in _reason_counts(ev, ans).items():
                    merged.setdefault(reason, []).append((hits, total))
            percent = {}
            for reason, pairs in merged.items():
                hits = sum(h for h, _ in pairs)
                total = sum(t for _, t in pairs)
                if total:
                    percent[reason] = 100.0 * hits / total
            design_rows.append(DesignRow(design_kind=kind, source_id=source,
                                         combined_p=combined_p,
                                         reason_percent=percent))
        return StudyReport(
            study_id=study_id,
            replicates=tuple(replicate_rows),
            designs=tuple(design_rows),
            reps_single=reps_single,
            reps_combined=reps_combined,
            seed=seed,
        )


def _reason_counts(ev: EvaluationSet, answer_index: int) -> dict[str, tuple[int, int]]:
    out = {}
    for reason in REASONS:
        tagged = [p for p in ev.picks if reason in p.reasons]
        if tagged:
            hits = sum(1 for p in tagged if p.panel_index == answer_index)
            out[reason] = (hits, len(tagged))
    return out
