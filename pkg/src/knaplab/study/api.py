"""HTTP+JSON front of the study service.

Endpoints (all timestamps UTC milliseconds):

* ``POST /sessions``                 - create a session (random or forced cell)
* ``GET  /sessions/{id}/next``       - current problem view; idempotent until submit
* ``POST /sessions/{id}/submit``     - settle the open problem
* ``POST /sessions/{id}/finalize``   - close the session, compute payment
* ``POST /sessions/{id}/invalidate`` - mark a session excluded (reload policy)
* ``GET  /export``                   - line-delimited trial records (filterable)
* ``GET  /healthz``                  - liveness probe

Error mapping: unknown session 401, phase violations and replays 409,
infeasible selections 422, empty exports 404. Bodies carry
``{"error": <kind>, "detail": <message>}``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from ..errors import (
    ConflictError,
    EmptyDatasetError,
    FeasibilityError,
    KnaplabError,
    ParameterError,
    PhaseError,
    UnknownSessionError,
)
from .model import TreatmentConfig
from .service import ServiceConfig, StudyService

__all__ = ["create_app"]


class TreatmentBody(BaseModel):
    bonus: str = "b10"
    ml_arm: str = "none"
    comprehension_quiz: bool = False


class CreateSessionBody(BaseModel):
    mode: str = "random"
    seed: int = 0
    treatment: TreatmentBody | None = None


class SubmitBody(BaseModel):
    problem_index: int
    selection: list[int]
    client_elapsed_ms: int = 0
    auto: bool = False


class InvalidateBody(BaseModel):
    reason: str = "reload"


_ERROR_STATUS = [
    (UnknownSessionError, 401, "unknown_session"),
    (FeasibilityError, 422, "infeasible_selection"),
    (ConflictError, 409, "conflict"),
    (PhaseError, 409, "phase_error"),
    (EmptyDatasetError, 404, "empty_dataset"),
    (ParameterError, 400, "bad_parameter"),
]


def create_app(service: StudyService | None = None) -> FastAPI:
    svc = service or StudyService(ServiceConfig())
    app = FastAPI(title="knaplab study service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = svc

    @app.exception_handler(KnaplabError)
    async def knaplab_error_handler(request: Request, exc: KnaplabError):
        for cls, status, kind in _ERROR_STATUS:
            if isinstance(exc, cls):
                return JSONResponse(
                    status_code=status, content={"error": kind, "detail": str(exc)}
                )
        return JSONResponse(status_code=500, content={"error": "internal", "detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        treatment = (
            TreatmentConfig(**body.treatment.model_dump()) if body.treatment is not None else None
        )
        session = svc.create_session(assignment_mode=body.mode, seed=body.seed, treatment=treatment)
        return {
            "session_id": session.session_id,
            "phase": session.phase,
            "treatment": {
                "bonus": session.treatment.bonus,
                "ml_arm": session.treatment.ml_arm,
                "comprehension_quiz": session.treatment.comprehension_quiz,
            },
            "n_practice": len(session.practice),
            "n_main": len(session.main),
            "time_limit_ms": svc.config.time_limit_ms,
        }

    @app.get("/sessions/{session_id}/next")
    def next_problem(session_id: str):
        return svc.next_problem(session_id)

    @app.post("/sessions/{session_id}/submit")
    def submit(session_id: str, body: SubmitBody):
        return svc.submit_solution(
            session_id,
            problem_index=body.problem_index,
            selection=body.selection,
            client_elapsed_ms=body.client_elapsed_ms,
            auto=body.auto,
        )

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        return svc.finalize_session(session_id)

    @app.post("/sessions/{session_id}/invalidate")
    def invalidate(session_id: str, body: InvalidateBody):
        return svc.invalidate_session(session_id, reason=body.reason)

    @app.get("/export")
    def export(arm: str | None = None, bonus: str | None = None, include_incomplete: bool = False):
        lines = "\n".join(svc.export_jsonl(arm=arm, bonus=bonus, include_incomplete=include_incomplete))
        return PlainTextResponse(lines + ("\n" if lines else ""))

    return app


def main(argv=None) -> None:
    import argparse

    import uvicorn

    from ..recommenders import Recommender
    import numpy as np

    parser = argparse.ArgumentParser(description="Run the study service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--log", default=None, help="event-log path (JSONL, append-only)")
    parser.add_argument(
        "--time-limit-ms", type=int, default=180_000, help="per-problem time limit"
    )
    parser.add_argument(
        "--arms",
        choices=["calibrated", "greedy"],
        default="calibrated",
        help="calibrated: bisect each arm to its treatment target at startup; "
        "greedy: serve plain density-greedy recommendations on every arm (fast start)",
    )
    args = parser.parse_args(argv)

    config = ServiceConfig(time_limit_ms=args.time_limit_ms)
    if args.arms == "greedy":
        greedy = Recommender(kind="greedy_density", parameters=np.array([]))
        config.arm_recommenders = {arm: greedy for arm in ("q1", "q2", "q3", "q4", "q5", "q6")}
    from .service import EventLog

    service = StudyService(config, log=EventLog(args.log))
    uvicorn.run(create_app(service), host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
