"""HTTP/1.1 JSON API around a study store.

POST /studies registers a study from pre-rendered lineup assets;
GET /studies/{id}/next serves the next lineup for an observer;
POST /studies/{id}/lineups/{lid}/pick records an evaluation;
POST /studies/{id}/lineups/{lid}/reveal discloses an answer after a
committed pick; GET /studies/{id}/report aggregates the pick log.

Payloads sent to observers (next responses) are assembled exclusively
from servable assets; answers live in a file those code paths never open.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .study import (DesignEntry, LineupAsset, PickRecord, StudyConfig, StudyError,
                    StudyStore)

__all__ = ["create_app"]


class LineupAssetBody(BaseModel):
    lineup_id: str
    replicate_id: str
    m: int = 20
    seed: int = 0
    svg: str
    answer_index: int


class DesignBody(BaseModel):
    kind: str
    source_id: str
    replicates: list[LineupAssetBody]


class StudyBody(BaseModel):
    study_id: str
    session_cap: int = 10
    serve_seed: int = 0
    designs: list[DesignBody]


class PickBody(BaseModel):
    observer: str
    panel: int
    reasons: list[str] = Field(default_factory=list)
    other_text: str = ""
    confidence: int = 3
    duration_s: float = 0.0


class RevealBody(BaseModel):
    observer: str
    confirm: bool = False


def create_app(data_dir, ui_dir: str | None = None) -> FastAPI:
    store = StudyStore(data_dir)
    app = FastAPI(title="lmelineup study service")

    @app.exception_handler(StudyError)
    async def study_error(_, exc: StudyError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(_, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.post("/studies")
    def create_study(body: StudyBody):
        designs = []
        for d in body.designs:
            assets = tuple(LineupAsset(
                lineup_id=a.lineup_id, design_kind=d.kind, source_id=d.source_id,
                replicate_id=a.replicate_id, m=a.m, seed=a.seed, svg=a.svg,
                answer_index=a.answer_index) for a in d.replicates)
            designs.append(DesignEntry(kind=d.kind, source_id=d.source_id, assets=assets))
        manifest = store.create_study(StudyConfig(
            study_id=body.study_id, designs=tuple(designs),
            session_cap=body.session_cap, serve_seed=body.serve_seed))
        return {"ok": True, "study_id": body.study_id,
                "lineups": len(manifest["lineups"])}

    @app.get("/studies/{study_id}/next")
    def next_lineup(study_id: str, observer: str = Query(...)):
        nxt = store.next_lineup(study_id, observer)
        if nxt is None:
            return {"done": True}
        lineup_id, svg = nxt
        return {"lineup_id": lineup_id, "svg": svg}

    @app.post("/studies/{study_id}/lineups/{lineup_id}/pick")
    def submit_pick(study_id: str, lineup_id: str, body: PickBody):
        record = PickRecord(
            study_id=study_id,
            lineup_id=lineup_id,
            observer_id=body.observer,
            panel_index=body.panel,
            reasons=tuple(body.reasons),
            other_text=body.other_text,
            confidence=body.confidence,
            duration_seconds=body.duration_s,
        )
        return store.submit_pick(record)

    @app.post("/studies/{study_id}/lineups/{lineup_id}/reveal")
    def reveal(study_id: str, lineup_id: str, body: RevealBody):
        return store.reveal(study_id, lineup_id, body.observer, body.confirm)

    @app.get("/studies/{study_id}/report")
    def report(study_id: str, reps_single: int = 10 ** 5,
               reps_combined: int = 10 ** 5, seed: int = 0):
        rep = store.report(study_id, reps_single=reps_single,
                           reps_combined=reps_combined, seed=seed)
        return json.loads(rep.to_json())

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
