"""HTTP session service for interactive comparison search."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import InvalidInputError
from ..search_discrete import ItemSet
from .schemas import (
    AnswerRequest,
    ContinuousConfig,
    CreateSessionRequest,
    DiscreteConfig,
    SessionState,
)
from .sessions import ContinuousSessionEngine, DiscreteSessionEngine, Session, SessionStore


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


def _session_state(session: Session) -> dict:
    state = {
        "session_id": session.session_id,
        "mode": session.mode,
        "pending": session.pending_query(),
        "terminal": session.engine.terminal,
        "belief": session.engine.belief_summary(),
        "history_length": session.history_length,
        "created_at": session.created_at,
        "updated_at": session.updated_at,
    }
    if session.mode == "continuous":
        state["stage_log"] = session.engine.stage_log
    return state


def create_app(snapshot_dir=None) -> FastAPI:
    app = FastAPI(title="cklsearch session service")
    store = SessionStore(snapshot_dir=snapshot_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(InvalidInputError)
    async def handle_invalid(request: Request, exc: InvalidInputError):
        return JSONResponse(
            status_code=400, content={"code": "invalid-input", "message": str(exc)}
        )

    def _get_session(session_id: str) -> Session:
        session = store.get(session_id)
        if session is None:
            raise ApiError(404, "not-found", f"unknown session {session_id}")
        return session

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/sessions", response_model=SessionState, status_code=201)
    async def create_session(body: CreateSessionRequest):
        if body.mode == "discrete":
            if not body.items:
                raise ApiError(400, "invalid-input", "discrete mode requires items")
            cfg = body.config if isinstance(body.config, DiscreteConfig) else DiscreteConfig()
            items = ItemSet.from_manifest([item.model_dump() for item in body.items])
            engine = DiscreteSessionEngine(items, gamma=cfg.gamma, r=cfg.r)
        else:
            cfg = (
                body.config
                if isinstance(body.config, ContinuousConfig)
                else ContinuousConfig()
            )
            engine = ContinuousSessionEngine(
                dim=cfg.dim,
                gamma=cfg.gamma,
                omega_center=cfg.omega_center,
                omega_edge=cfg.omega_edge,
                query_budget=cfg.query_budget,
                alpha=cfg.alpha,
                grid_resolution=cfg.grid_resolution,
                max_queries_per_stage=cfg.max_queries_per_stage,
            )
        session = store.create(body.mode, engine)
        return _session_state(session)

    @app.get("/sessions/{session_id}", response_model=SessionState)
    async def get_session(session_id: str):
        return _session_state(_get_session(session_id))

    @app.post("/sessions/{session_id}/answer", response_model=SessionState)
    async def answer(session_id: str, body: AnswerRequest):
        session = _get_session(session_id)
        if session.engine.terminal is not None:
            raise ApiError(409, "terminal", "session already finished")
        if body.nonce != session.nonce:
            raise ApiError(409, "stale-nonce", "answer does not reference the pending query")
        store.advance(session, body.choice, body.is_target)
        return _session_state(session)

    return app
