"""Session-oriented JSON HTTP API over the analysis engine.

Uploading a dataset and selecting a KPI trains a model synchronously and
fixes an immutable session (content-addressed, so replaying the same
request returns the same session). Sensitivity, comparison, per-row, and
goal endpoints delegate to the engine; goal runs hold a per-session slot
(concurrent second run gets 429), respect a budget cap, and return a
partial trace with 408 on timeout. Sessions can be write-through
snapshotted to a directory and reloaded on restart.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .dataset import KPI_DISCRETE, AnalysisFrame, Dataset, make_frame, parse_csv, serialize_csv
from .errors import DataFormatError, SingleClassError, ValidationError, WhatIfError
from .goalseek import optimize_goal
from .importance import DEFAULT_SHAPLEY_PERMUTATIONS, driver_importance
from .model import (
    Hyperparameters,
    TrainedModel,
    kpi_value,
    model_from_json,
    model_to_json,
    train,
)
from .sensitivity import comparison_sweep, row_sensitivity, run_sensitivity
from .synthetic import generate_synthetic
from .wire import (
    curves_wire,
    dataset_wire,
    ensure_finite,
    goal_spec_from_wire,
    goal_wire,
    importance_wire,
    perturbation_spec_from_wire,
    row_sensitivity_wire,
    sensitivity_wire,
)


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    snapshot_dir: str | None = None
    budget_cap: int = 200
    goal_timeout: float = 120.0
    shapley_permutations: int = DEFAULT_SHAPLEY_PERMUTATIONS
    cors_origins: tuple[str, ...] = ("*",)


@dataclass
class Session:
    id: str
    frame: AnalysisFrame
    model: TrainedModel
    importance: dict
    baseline_kpi: float
    ground_truth_kpi: float
    created_at: str
    goal_lock: threading.Lock = field(default_factory=threading.Lock)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details or {}


def _error_response(exc: ApiError) -> JSONResponse:
    return JSONResponse(
        status_code=exc.status,
        content={"code": exc.code, "message": exc.message, "details": exc.details},
    )


def _ground_truth_kpi(frame: AnalysisFrame) -> float:
    y = frame.kpi_values()
    if frame.kpi_kind == KPI_DISCRETE:
        return float(100.0 * (y == 1.0).mean())
    return float(y.mean())


class Store:
    """In-memory datasets and sessions with optional JSON snapshots."""

    def __init__(self, snapshot_dir: str | None = None):
        self._lock = threading.Lock()
        self.datasets: dict[str, Dataset] = {}
        self.sessions: dict[str, Session] = {}
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        if self.snapshot_dir:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            self._load_snapshots()

    def add_dataset(self, dataset: Dataset) -> None:
        with self._lock:
            self.datasets[dataset.id] = dataset
        if self.snapshot_dir:
            path = self.snapshot_dir / f"dataset-{dataset.id}.json"
            path.write_text(
                json.dumps({"id": dataset.id, "csv": serialize_csv(dataset)})
            )

    def add_session(self, session: Session) -> None:
        with self._lock:
            self.sessions[session.id] = session
        if self.snapshot_dir:
            payload = {
                "id": session.id,
                "dataset_id": session.frame.dataset_ref,
                "model": model_to_json(session.model),
                "importance": session.importance,
                "baseline_kpi": session.baseline_kpi,
                "ground_truth_kpi": session.ground_truth_kpi,
                "created_at": session.created_at,
            }
            (self.snapshot_dir / f"session-{session.id}.json").write_text(
                json.dumps(payload)
            )

    def _load_snapshots(self) -> None:
        for path in sorted(self.snapshot_dir.glob("dataset-*.json")):
            payload = json.loads(path.read_text())
            self.datasets[payload["id"]] = parse_csv(payload["csv"])
        for path in sorted(self.snapshot_dir.glob("session-*.json")):
            payload = json.loads(path.read_text())
            dataset = self.datasets.get(payload["dataset_id"])
            if dataset is None:
                continue
            model = model_from_json(payload["model"], dataset)
            self.sessions[payload["id"]] = Session(
                id=payload["id"],
                frame=model.frame,
                model=model,
                importance=payload["importance"],
                baseline_kpi=payload["baseline_kpi"],
                ground_truth_kpi=payload["ground_truth_kpi"],
                created_at=payload["created_at"],
            )


def _session_id(dataset_id: str, kpi: str, drivers, seed: int, hyper: dict) -> str:
    key = json.dumps(
        {"dataset": dataset_id, "kpi": kpi, "drivers": drivers, "seed": seed,
         "hyper": hyper},
        sort_keys=True,
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


def _session_wire(session: Session) -> dict:
    return {
        "session_id": session.id,
        "dataset_id": session.frame.dataset_ref,
        "kpi": session.frame.kpi,
        "kpi_kind": session.frame.kpi_kind,
        "drivers": list(session.frame.drivers),
        "confidence": session.model.confidence,
        "baseline_kpi": session.baseline_kpi,
        "ground_truth_kpi": session.ground_truth_kpi,
        "importance": session.importance,
        "created_at": session.created_at,
    }


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    app = FastAPI(title="whatif", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.store = Store(config.snapshot_dir)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    store: Store = app.state.store

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def handle_body_error(request: Request, exc: RequestValidationError):
        return _error_response(
            ApiError(422, "invalid_body", "request body failed validation",
                     {"errors": str(exc)})
        )

    @app.exception_handler(WhatIfError)
    async def handle_engine_error(request: Request, exc: WhatIfError):
        return _error_response(_map_engine_error(exc))

    def _map_engine_error(exc: WhatIfError) -> ApiError:
        if isinstance(exc, SingleClassError):
            return ApiError(409, "single_class_kpi", str(exc))
        if isinstance(exc, DataFormatError):
            return ApiError(422, "bad_data", str(exc))
        if isinstance(exc, ValidationError):
            return ApiError(422, "invalid_request", str(exc))
        return ApiError(500, "engine_error", str(exc))

    def _json(payload: dict, status: int = 200) -> JSONResponse:
        return JSONResponse(status_code=status, content=ensure_finite(payload))

    def _get_session(session_id: str) -> Session:
        session = store.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    async def _body_json(request: Request) -> dict:
        try:
            payload = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError as exc:
            raise ApiError(422, "invalid_body", f"request body is not JSON: {exc}")
        if not isinstance(payload, dict):
            raise ApiError(422, "invalid_body", "request body must be a JSON object")
        return payload

    @app.post("/api/datasets")
    async def upload_dataset(request: Request):
        body = await request.body()
        if not body:
            raise ApiError(422, "bad_data", "empty request body")
        dataset = parse_csv(body)
        store.add_dataset(dataset)
        return _json(dataset_wire(dataset), status=201)

    @app.post("/api/datasets/synthetic")
    async def synthetic_dataset(request: Request):
        payload = await _body_json(request)
        dataset, truth = generate_synthetic(
            str(payload.get("use_case", "")),
            int(payload.get("rows", 500)),
            int(payload.get("seed", 0)),
        )
        store.add_dataset(dataset)
        wire = dataset_wire(dataset)
        wire["ground_truth"] = truth
        return _json(wire, status=201)

    @app.get("/api/datasets/{dataset_id}")
    async def get_dataset(dataset_id: str):
        dataset = store.datasets.get(dataset_id)
        if dataset is None:
            raise ApiError(404, "unknown_dataset", f"no dataset {dataset_id!r}")
        return _json(dataset_wire(dataset))

    @app.get("/api/datasets/{dataset_id}/rows")
    async def get_rows(dataset_id: str, offset: int = 0, limit: int = 50):
        dataset = store.datasets.get(dataset_id)
        if dataset is None:
            raise ApiError(404, "unknown_dataset", f"no dataset {dataset_id!r}")
        offset = max(0, offset)
        limit = max(0, min(limit, 1000))
        rows = [list(row) for row in dataset.rows[offset : offset + limit]]
        return _json(
            {
                "columns": list(dataset.column_names()),
                "rows": rows,
                "offset": offset,
                "total": dataset.row_count,
            }
        )

    @app.post("/api/sessions")
    async def create_session(request: Request):
        payload = await _body_json(request)
        dataset_id = str(payload.get("dataset_id", ""))
        dataset = store.datasets.get(dataset_id)
        if dataset is None:
            raise ApiError(404, "unknown_dataset", f"no dataset {dataset_id!r}")
        if "kpi" not in payload:
            raise ApiError(422, "invalid_request", "kpi is required")
        kpi = str(payload["kpi"])
        drivers = payload.get("drivers")
        seed = int(payload.get("seed", 0))
        hyper_dict = payload.get("hyper") or {}
        try:
            hyper = Hyperparameters(**hyper_dict)
        except TypeError as exc:
            raise ApiError(422, "invalid_request", f"bad hyperparameters: {exc}")

        session_id = _session_id(dataset_id, kpi, drivers, seed, hyper_dict)
        existing = store.sessions.get(session_id)
        if existing is not None:
            return _json(_session_wire(existing), status=201)

        frame = make_frame(dataset, kpi, drivers)
        model = train(frame, hyper, seed)
        report = driver_importance(
            model, frame, shapley_permutations=config.shapley_permutations
        )
        session = Session(
            id=session_id,
            frame=frame,
            model=model,
            importance=importance_wire(report),
            baseline_kpi=kpi_value(model, frame.driver_matrix()),
            ground_truth_kpi=_ground_truth_kpi(frame),
            created_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )
        store.add_session(session)
        return _json(_session_wire(session), status=201)

    @app.get("/api/sessions/{session_id}")
    async def get_session(session_id: str):
        return _json(_session_wire(_get_session(session_id)))

    @app.post("/api/sessions/{session_id}/sensitivity")
    async def session_sensitivity(session_id: str, request: Request):
        session = _get_session(session_id)
        spec = perturbation_spec_from_wire(await _body_json(request))
        result = run_sensitivity(
            session.model, session.frame.driver_matrix(), session.frame, spec
        )
        return _json(sensitivity_wire(result))

    @app.post("/api/sessions/{session_id}/comparison")
    async def session_comparison(session_id: str, request: Request):
        session = _get_session(session_id)
        payload = await _body_json(request)
        drivers = payload.get("drivers") or list(session.frame.drivers)
        try:
            lo = float(payload["lo"])
            hi = float(payload["hi"])
            steps = int(payload.get("steps", 11))
            mode = str(payload["mode"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ApiError(422, "invalid_request", f"bad sweep spec: {exc}")
        curves = comparison_sweep(
            session.model,
            session.frame.driver_matrix(),
            session.frame,
            [str(d) for d in drivers],
            mode,
            lo,
            hi,
            steps,
        )
        return _json(curves_wire(curves))

    @app.post("/api/sessions/{session_id}/rows/{row_index}/sensitivity")
    async def session_row_sensitivity(session_id: str, row_index: int, request: Request):
        session = _get_session(session_id)
        if not 0 <= row_index < session.frame.row_count:
            raise ApiError(404, "unknown_row", f"no row {row_index}")
        spec = perturbation_spec_from_wire(await _body_json(request))
        result = row_sensitivity(
            session.model,
            session.frame.driver_matrix(),
            session.frame,
            row_index,
            spec,
        )
        return _json(row_sensitivity_wire(result))

    @app.post("/api/sessions/{session_id}/goal")
    async def session_goal(session_id: str, request: Request):
        session = _get_session(session_id)
        spec = goal_spec_from_wire(await _body_json(request))
        if spec.budget > config.budget_cap:
            raise ApiError(
                422,
                "budget_too_large",
                f"budget {spec.budget} exceeds cap {config.budget_cap}",
            )
        if not session.goal_lock.acquire(blocking=False):
            raise ApiError(
                429, "goal_in_progress", "another goal run holds this session"
            )
        try:
            result = optimize_goal(
                session.model,
                session.frame.driver_matrix(),
                session.frame,
                spec,
                time_limit=config.goal_timeout,
            )
        finally:
            session.goal_lock.release()
        if result.timed_out:
            raise ApiError(
                408,
                "goal_timeout",
                f"goal seek exceeded {config.goal_timeout} s; partial trace attached",
                details={"partial": ensure_finite(goal_wire(result))},
            )
        return _json(goal_wire(result))

    return app


def serve(config: ServerConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
