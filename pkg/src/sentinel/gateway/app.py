"""HTTP facade over the single-writer pipeline.

All mutating requests serialize through one lock; reads are cheap
snapshots. Every failure path returns an ApiError body. The stream
endpoint delivers journal records as server-sent events in seq order with
no gaps; reconnecting with last_seq resumes exactly.
"""

from __future__ import annotations

from typing import Any, Iterator

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from ..canon import canonical_json
from ..incidents import (
    IllegalTransition,
    ImmutableRecord,
    InvalidAction,
    UnknownIncident,
)
from ..ingest import TransformError
from ..journal import KINDS
from ..pipeline import NotInProgress, Pipeline, UnknownTarget
from ..sim import SimError
from .schemas import (
    ActionReceipt,
    ActionRequest,
    AdvanceRequest,
    ImportResultModel,
    TransitionRequest,
)


class HttpError(Exception):
    def __init__(self, status: int, code: str, detail: str) -> None:
        self.status = status
        self.code = code
        self.detail = detail
        super().__init__(detail)


def create_app(pipeline: Pipeline, token: str | None = None, console_dir: str | None = None) -> FastAPI:
    """Build the gateway app; with console_dir, the static console is served at /."""
    app = FastAPI(title="sentinel gateway", version="0.1.0")
    lock = pipeline.lock
    app.state.pipeline = pipeline

    def authorized(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HttpError(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(HttpError)
    async def http_error_handler(request: Request, exc: HttpError):
        return JSONResponse(
            status_code=exc.status,
            content={"status": exc.status, "code": exc.code, "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"status": 400, "code": "bad_request", "detail": str(exc.errors()[:3])},
        )

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"status": 500, "code": "internal_error", "detail": str(exc)},
        )

    # -- imports -----------------------------------------------------------

    @app.post("/api/import/{table}", response_model=ImportResultModel)
    def handle_import(table: str, rows: list[dict[str, Any]], _: None = Depends(authorized)):
        if len(rows) > pipeline.config.max_import_rows:
            raise HttpError(413, "batch_too_large", f"batch exceeds {pipeline.config.max_import_rows} rows")
        for i, row in enumerate(rows):
            for key, value in row.items():
                if isinstance(value, (dict, list)):
                    raise HttpError(400, "bad_request", f"rows[{i}].{key}: values must be scalars")
        with lock:
            try:
                return pipeline.handle_import(table, rows)
            except KeyError:
                raise HttpError(404, "unknown_table", f"no transform map for table {table!r}")
            except TransformError as exc:
                raise HttpError(400, "bad_request", str(exc))

    # -- queries -----------------------------------------------------------

    @app.get("/api/events")
    def list_events(type: str | None = None, source: str | None = None, limit: int = 500, _: None = Depends(authorized)):
        records = pipeline.journal.records_after(0, {"event"})
        events = [r["body"] for r in records]
        if type:
            events = [e for e in events if e["type"] == type]
        if source:
            events = [e for e in events if e["source_id"] == source]
        return events[-limit:]

    @app.get("/api/alerts")
    def list_alerts(_: None = Depends(authorized)):
        return pipeline.alerts.state_view()

    @app.get("/api/incidents")
    def list_incidents(_: None = Depends(authorized)):
        return pipeline.incidents.state_view()

    @app.get("/api/incidents/{ref}")
    def get_incident(ref: str, _: None = Depends(authorized)):
        try:
            return pipeline.incidents.get(ref).to_dict()
        except UnknownIncident:
            raise HttpError(404, "unknown_incident", f"no incident {ref!r}")

    @app.patch("/api/incidents/{ref}")
    def patch_incident(ref: str, body: TransitionRequest, _: None = Depends(authorized)):
        with lock:
            try:
                return pipeline.transition_incident(ref, body.state, body.actor, body.note)
            except UnknownIncident:
                raise HttpError(404, "unknown_incident", f"no incident {ref!r}")
            except ImmutableRecord as exc:
                raise HttpError(409, "immutable_record", str(exc))
            except IllegalTransition as exc:
                raise HttpError(409, "illegal_transition", str(exc))

    @app.post("/api/actions", response_model=ActionReceipt)
    def post_action(body: ActionRequest, _: None = Depends(authorized)):
        with lock:
            try:
                return pipeline.execute_response(body.model_dump())
            except UnknownIncident:
                raise HttpError(404, "unknown_incident", f"no incident {body.incident_ref!r}")
            except NotInProgress as exc:
                raise HttpError(409, "incident_not_in_progress", str(exc))
            except UnknownTarget as exc:
                raise HttpError(404, "unknown_target", str(exc))
            except InvalidAction as exc:
                raise HttpError(409, "invalid_action", str(exc))

    @app.get("/api/cmdb/ci")
    def list_cis(ci_class: str | None = None, _: None = Depends(authorized)):
        cis = [pipeline.cmdb.cis[k].to_dict() for k in sorted(pipeline.cmdb.cis)]
        if ci_class:
            cis = [ci for ci in cis if ci["class"] == ci_class]
        return cis

    @app.get("/api/cmdb/ci/{ci_id}")
    def get_ci(ci_id: str, _: None = Depends(authorized)):
        ci = pipeline.cmdb.get(ci_id)
        if ci is None:
            raise HttpError(404, "unknown_ci", f"no CI {ci_id!r}")
        return ci.to_dict()

    # -- simulation --------------------------------------------------------

    @app.get("/api/sim/status")
    def sim_status(_: None = Depends(authorized)):
        return pipeline.sim_status()

    @app.post("/api/sim/advance")
    def sim_advance(body: AdvanceRequest, _: None = Depends(authorized)):
        with lock:
            if body.until_ms < pipeline.sim.clock_ms:
                raise HttpError(400, "bad_request", "until_ms is behind the simulation clock")
            try:
                return pipeline.drive(body.until_ms)
            except SimError as exc:
                raise HttpError(400, "bad_request", str(exc))

    # -- stream ------------------------------------------------------------

    @app.get("/api/stream")
    def stream(
        kinds: str = "",
        last_seq: int = 0,
        follow: bool = True,
        _: None = Depends(authorized),
    ):
        if last_seq > pipeline.journal.seq:
            raise HttpError(400, "bad_request", f"last_seq {last_seq} is in the future")
        wanted = {k for k in kinds.split(",") if k} or None
        if wanted and not wanted <= set(KINDS):
            raise HttpError(400, "bad_request", f"unknown kinds: {sorted(wanted - set(KINDS))}")

        def frames() -> Iterator[str]:
            cursor = last_seq
            idle_rounds = 0
            while True:
                batch = pipeline.journal.records_after(cursor)
                for record in batch:
                    cursor = record["seq"]
                    if wanted is None or record["kind"] in wanted:
                        yield f"data: {canonical_json(record)}\n\n"
                if not follow:
                    if not batch:
                        return
                    continue
                if not pipeline.journal.wait_for_seq(cursor, timeout=1.0):
                    idle_rounds += 1
                    yield ": keepalive\n\n"
                    if idle_rounds > 600:
                        return
                else:
                    idle_rounds = 0

        return StreamingResponse(frames(), media_type="text/event-stream")

    if console_dir is not None:
        from starlette.staticfiles import StaticFiles

        # mounted last so /api keeps precedence
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
