"""HTTP surface of the listening study.

    POST /api/session                      demographics intake
    GET  /api/session/{id}/practice        non-recorded training trial
    GET  /api/session/{id}/trial           current trial
    POST /api/session/{id}/trial/{n}       ratings submission
    GET  /api/audio/{token}.wav            opaque stimulus streaming
    GET  /api/export?format=csv|json       admin export (header secret)
    GET  /api/health

Client-visible payloads never carry condition names or file paths; stimuli
are addressed only by opaque tokens.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..dataio import StudyManifest, StudySettings, load_manifest
from ..errors import DataError
from .config import ServiceConfig
from .store import (StudyCompleteError, StudyStore, SubmissionOrderError,
                    UnknownSessionError)

ADMIN_HEADER = "x-admin-secret"


class SessionRequest(BaseModel):
    demographics: dict


class RatingsRequest(BaseModel):
    ratings: dict


def _effective_settings(config: ServiceConfig,
                        manifest: StudyManifest) -> StudySettings:
    base = manifest.settings
    pick = lambda override, default: default if override is None else override
    return StudySettings(
        trials_per_session=int(pick(config.trials_per_session,
                                    base.trials_per_session)),
        midi_min=int(pick(config.midi_min, base.midi_min)),
        midi_max=int(pick(config.midi_max, base.midi_max)),
        screening_threshold=float(pick(config.screening_threshold,
                                       base.screening_threshold)),
    )


def create_app(config: ServiceConfig, admin_secret: str) -> FastAPI:
    if not admin_secret:
        raise DataError("admin secret is empty; refusing to start")
    manifest = load_manifest(config.manifest_path)
    settings = _effective_settings(config, manifest)
    store = StudyStore(manifest, config.state_dir, settings)

    app = FastAPI(title="aeval listening study")
    app.state.store = store

    @app.exception_handler(DataError)
    async def data_error_handler(_request: Request, exc: DataError):
        status = 400
        if isinstance(exc, UnknownSessionError):
            status = 404
        elif isinstance(exc, (SubmissionOrderError, StudyCompleteError)):
            status = 409
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/api/health")
    async def health():
        return {"status": "ok"}

    @app.post("/api/session", status_code=201)
    async def create_session(req: SessionRequest):
        sess = store.create_session(req.demographics)
        return {"session_id": sess.id,
                "trials_per_session": settings.trials_per_session}

    @app.get("/api/session/{session_id}/practice")
    async def practice(session_id: str):
        return store.practice_trial(session_id)

    @app.get("/api/session/{session_id}/trial")
    async def next_trial(session_id: str):
        try:
            return store.next_trial(session_id)
        except StudyCompleteError:
            return {"status": "complete"}

    @app.post("/api/session/{session_id}/trial/{trial_index}")
    async def submit(session_id: str, trial_index: int, req: RatingsRequest):
        return store.submit_ratings(session_id, trial_index, req.ratings)

    @app.get("/api/audio/{token}.wav")
    async def audio(token: str):
        path = store.resolve_audio(token)
        return Response(content=Path(path).read_bytes(),
                        media_type="audio/wav")

    @app.get("/api/export")
    async def export(format: str = "csv",
                     x_admin_secret: str | None = Header(default=None,
                                                         alias=ADMIN_HEADER)):
        if x_admin_secret != admin_secret:
            raise HTTPException(status_code=403, detail="bad admin credential")
        if format == "json":
            return {"sessions": store.export_sessions()}
        if format == "csv":
            return Response(content=store.export_csv(), media_type="text/csv")
        raise HTTPException(status_code=400,
                            detail=f"unknown export format {format!r}")

    if config.static_dir is not None:
        app.mount("/", StaticFiles(directory=config.static_dir, html=True),
                  name="static")

    return app
