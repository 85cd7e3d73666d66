"""REST + WebSocket surface over the engine.

Game CRUD, copilot jobs, session rounds, analytics, and a per-session
event stream. Committed events push to the socket in seq order; NPC
dialogue is additionally chunked for streaming feel (chunk frames carry
no contract — the event frame is authoritative).
"""

from __future__ import annotations

import asyncio
import json
import logging

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool
from starlette.staticfiles import StaticFiles

from . import copilot as copilot_mod
from .analytics import analytics_summary
from .engine import Engine
from .errors import (
    BackendUnavailable,
    BusySession,
    InvalidSeed,
    ParseError,
    SessionClosed,
    UnknownGame,
    UnknownSession,
    ValidationError,
)
from .game_schema import load_game_with_report, serialize_game

log = logging.getLogger(__name__)


def create_app(engine: Engine, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="zagii", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    jobs: dict[str, copilot_mod.CopilotJob] = {}

    @app.exception_handler(UnknownSession)
    @app.exception_handler(UnknownGame)
    async def _not_found(request: Request, exc: Exception):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(BusySession)
    async def _busy(request: Request, exc: Exception):
        return JSONResponse(status_code=409,
                            content={"error": "round in flight", "detail": str(exc)})

    @app.exception_handler(SessionClosed)
    async def _closed(request: Request, exc: Exception):
        return JSONResponse(status_code=409,
                            content={"error": "session_closed", "detail": str(exc)})

    @app.exception_handler(BackendUnavailable)
    async def _backend_down(request: Request, exc: Exception):
        return JSONResponse(status_code=503,
                            content={"error": "backend unavailable", "retryable": True})

    # --- games ---

    @app.post("/games", status_code=201)
    async def publish_game(request: Request):
        body = await request.body()
        try:
            definition, report = load_game_with_report(body)
        except ParseError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        if not report.ok:
            return JSONResponse(status_code=422, content={
                "error": "validation failed",
                "issues": [{"severity": i.severity, "path": i.path, "message": i.message}
                           for i in report.issues],
            })
        engine.publish_game(definition)
        return {"game_id": definition.game_id,
                "warnings": [{"path": i.path, "message": i.message}
                             for i in report.warnings]}

    @app.get("/games")
    def list_games():
        return {"games": [
            {"game_id": g.game_id, "title": g.title, "genre": g.genre,
             "chapters": len(g.chapters), "npcs": len(g.npcs())}
            for g in engine.list_games()
        ]}

    @app.get("/games/{game_id}")
    def get_game(game_id: str):
        definition = engine.get_game(game_id)
        if definition is None:
            raise UnknownGame(game_id)
        return Response(content=serialize_game(definition), media_type="application/json")

    # --- copilot ---

    @app.post("/copilot/jobs", status_code=201)
    def create_job(body: dict):
        seed = body.get("seed", "")
        if not seed or not seed.strip():
            return JSONResponse(status_code=400, content={"error": "seed must be nonempty"})
        template = None
        if body.get("template_id"):
            template = engine.get_game(body["template_id"])
            if template is None:
                raise UnknownGame(body["template_id"])
        try:
            job = copilot_mod.expand_seed(seed, engine.gateway, template=template)
        except InvalidSeed as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        jobs[job.job_id] = job
        engine.storage.save_job(job.job_id, job.to_dict())
        return job.to_dict()

    @app.get("/copilot/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is not None:
            return job.to_dict()
        stored = engine.storage.get_job(job_id)
        if stored is None:
            return JSONResponse(status_code=404, content={"error": f"unknown job {job_id}"})
        return stored

    @app.post("/copilot/jobs/{job_id}/resume")
    def resume_job(job_id: str, body: dict):
        job = jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"error": f"unknown job {job_id}"})
        edits = body.get("stage_outputs", {})
        for stage, text in edits.items():
            if stage in copilot_mod.STAGES:
                job.stage_outputs[stage] = text
        # Later stages regenerate against the edited output.
        if job.failed_stage in copilot_mod.STAGES:
            failed_index = copilot_mod.STAGES.index(job.failed_stage)
            for later in copilot_mod.STAGES[failed_index + 1:]:
                job.stage_outputs.pop(later, None)
        job = copilot_mod.expand_seed(job.seed_text, engine.gateway, resume_from=job)
        jobs[job.job_id] = job
        engine.storage.save_job(job.job_id, job.to_dict())
        return job.to_dict()

    # --- sessions ---

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        session = engine.create_session(body["game_id"], body.get("session_id"))
        return {"session_id": session.session_id, "game_id": session.game.game_id,
                "state": json.loads(session.state.to_canonical())}

    @app.post("/sessions/{session_id}/rounds")
    def run_round(session_id: str, body: dict):
        result = engine.run_player_round(session_id, body.get("utterance", ""))
        return result.to_dict()

    @app.get("/sessions/{session_id}/state")
    def session_state(session_id: str):
        return Response(content=engine.state_snapshot(session_id),
                        media_type="application/json")

    @app.delete("/sessions/{session_id}")
    def end_session(session_id: str):
        session = engine.end_session(session_id)
        return {"session_id": session_id, "ended": session.state.ended}

    # --- analytics ---

    @app.get("/analytics/summary")
    def analytics(outlier_threshold: int | None = Query(default=None),
                  top_k: int = Query(default=10)):
        summary = analytics_summary(engine.storage.list_records(),
                                    outlier_threshold=outlier_threshold, top_k=top_k)
        return summary.to_dict()

    # --- event stream ---

    async def _watch_disconnect(websocket: WebSocket):
        try:
            while True:
                message = await websocket.receive()
                if message["type"] == "websocket.disconnect":
                    return
        except Exception:
            return

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str,
                     from_seq: int | None = Query(default=None)):
        await websocket.accept()
        try:
            sub = engine.bus.subscribe(session_id, replay_from=from_seq)
        except UnknownSession:
            await websocket.close(code=4404)
            return
        chunk_size = engine.config.ws_chunk_size
        delay = engine.config.ws_chunk_delay_s
        watcher = asyncio.create_task(_watch_disconnect(websocket))
        try:
            while not watcher.done():
                event = await run_in_threadpool(sub.get, 0.2)
                if event is None:
                    continue
                if event.topic == "npc_action" and event.payload.get("kind") == "dialogue" \
                        and chunk_size > 0:
                    text = event.payload["dialogue"]["text"]
                    for offset in range(0, len(text), chunk_size):
                        await websocket.send_json({
                            "type": "chunk", "seq": event.seq,
                            "index": offset // chunk_size,
                            "text": text[offset:offset + chunk_size],
                        })
                        if delay:
                            await asyncio.sleep(delay)
                await websocket.send_json({
                    "type": "event",
                    "event": {"seq": event.seq, "session_id": event.session_id,
                              "topic": event.topic, "payload": event.payload,
                              "ts": event.ts},
                })
                if event.topic == "session_ended":
                    break
        except WebSocketDisconnect:
            pass
        finally:
            watcher.cancel()
            engine.bus.unsubscribe(session_id, sub)
        try:
            await websocket.close()
        except RuntimeError:
            pass

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
