"""HTTP/JSON control surface: runs, checkpoints, review queue, training jobs.

Every domain error maps to exactly one stable error code; malformed bodies
never surface as 500s. State is in-memory with optional persistence to a
data directory; the review UI is served as static assets under /ui when
built.
"""

from __future__ import annotations

import base64
import itertools
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import datafree, pipeline as pl, selfmod, store
from .core import EnhancedPrompt, Frame, Video
from .datafree import DataFreeConfig, HitlMode, Resolution, ReviewItem, ReviewStatus
from .errors import (
    AgentFailure,
    AlreadyResolved,
    BadIndex,
    BadMagic,
    BadVersion,
    DimensionMismatch,
    EmptyPrompt,
    EmptyVideo,
    InputMismatch,
    InvalidCount,
    JudgeUnavailable,
    NotAwaitingDecision,
    RetryExhausted,
    SopforgeError,
    TruncatedPayload,
    WrongStage,
)
from .judges import JudgeKind, JudgeSpec
from .selfmod import TrainConfig


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


_ERROR_MAP: list[tuple[type, int, str]] = [
    (InputMismatch, 400, "input_mismatch"),
    (EmptyPrompt, 422, "empty_prompt"),
    (WrongStage, 409, "wrong_stage"),
    (NotAwaitingDecision, 409, "not_awaiting"),
    (RetryExhausted, 409, "retry_exhausted"),
    (AlreadyResolved, 409, "already_resolved"),
    (BadIndex, 400, "bad_index"),
    (InvalidCount, 400, "bad_config"),
    (DimensionMismatch, 400, "input_mismatch"),
    (EmptyVideo, 400, "input_mismatch"),
    (BadMagic, 400, "bad_tvid"),
    (BadVersion, 400, "bad_tvid"),
    (TruncatedPayload, 400, "bad_tvid"),
    (JudgeUnavailable, 502, "judge_unavailable"),
    (AgentFailure, 500, "agent_failure"),
]


def _to_api_error(exc: SopforgeError) -> ApiError:
    for etype, status, code in _ERROR_MAP:
        if isinstance(exc, etype):
            return ApiError(status, code, str(exc))
    return ApiError(400, "domain_error", str(exc))


class TrainingJob:
    """Single background worker running the data-free loop."""

    _ids = itertools.count(1)

    def __init__(self, state: "AppState", cfg: DataFreeConfig):
        self.id = f"train-{next(self._ids):04d}"
        self.app_state = state
        self.cfg = cfg
        self.lock = threading.Lock()
        self.cond = threading.Condition(self.lock)
        self.state = "queued"
        self.iteration = 0
        self.epoch = 0
        self.last_loss: float | None = None
        self.alphas: dict[str, float] = {}
        self.pending_items: list[str] = []
        self.report: dict | None = None
        self.error: str | None = None
        self.thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self.thread.start()

    def _on_batch(self, record: dict):
        with self.lock:
            self.epoch = record["epoch"]
            self.last_loss = record["loss"]
            self.alphas = dict(record["alpha"])

    def _review_handler(self, items: list[ReviewItem]):
        with self.cond:
            for item in items:
                self.app_state.register_review(item)
            self.pending_items = [i.item_id for i in items]
            self.state = "awaiting_review"
            while any(
                self.app_state.reviews[i].status != ReviewStatus.RESOLVED
                for i in self.pending_items
            ):
                self.cond.wait()
            self.pending_items = []
            self.state = "running"

    def _run(self):
        with self.lock:
            self.state = "running"
        try:
            thetas, zs, report = datafree.datafree_train(
                self.cfg,
                review_handler=self._review_handler,
                on_batch=self._on_batch,
                on_iteration=self._on_iteration,
            )
            with self.lock:
                self.report = report
                self.state = "done"
            self.app_state.adopt_trained(thetas, zs, report, self.cfg)
        except Exception as exc:  # surfaced via the status record
            with self.lock:
                self.error = str(exc)
                self.state = "failed"

    def _on_iteration(self, n: int):
        with self.lock:
            self.iteration = n

    def status(self) -> dict:
        with self.lock:
            return {
                "training_id": self.id,
                "state": self.state,
                "iteration": self.iteration,
                "epoch": self.epoch,
                "last_loss": self.last_loss,
                "alphas": self.alphas,
                "pending_reviews": len(self.pending_items),
                "report": self.report,
                "error": self.error,
            }

    @property
    def active(self) -> bool:
        with self.lock:
            return self.state in ("queued", "running", "awaiting_review")


class AppState:
    def __init__(self, data_dir: str | None = None, system_seed: int = 0):
        self.data_dir = Path(data_dir) if data_dir else None
        self.lock = threading.Lock()
        self.agent_params, self.modulation = pl.default_system(system_seed)
        self.runs: dict[str, pl.PipelineRun] = {}
        self.run_locks: dict[str, threading.Lock] = {}
        self.artifacts: dict[str, bytes] = {}
        self.reviews: dict[str, ReviewItem] = {}
        self.jobs: dict[str, TrainingJob] = {}

    # ── runs ────────────────────────────────────────────────────────────────
    def add_run(self, run: pl.PipelineRun):
        with self.lock:
            self.runs[run.run_id] = run
            self.run_locks[run.run_id] = threading.Lock()

    def run_lock(self, run_id: str) -> threading.Lock:
        with self.lock:
            if run_id not in self.runs:
                raise ApiError(404, "unknown_run", f"no run {run_id}")
            return self.run_locks[run_id]

    def store_artifact(self, artifact_id: str, data: bytes):
        with self.lock:
            self.artifacts[artifact_id] = data

    # ── review queue ────────────────────────────────────────────────────────
    def register_review(self, item: ReviewItem):
        with self.lock:
            self.reviews[item.item_id] = item
            for j, candidate in enumerate(item.candidate_set.candidates):
                self.artifacts[f"{item.item_id}:cand:{j}"] = store.tvid_bytes(candidate)

    def active_job(self) -> TrainingJob | None:
        with self.lock:
            for job in self.jobs.values():
                if job.active:
                    return job
        return None

    def adopt_trained(self, thetas, zs, report, cfg: DataFreeConfig):
        """Fold trained chain parameters back into the serving system."""
        with self.lock:
            self.agent_params.update(thetas)
            self.modulation.update(zs)
        if self.data_dir:
            ckpt = self.data_dir / "checkpoint"
            meta = {
                "iteration": cfg.iterations,
                "epoch": cfg.train_cfg.epochs,
                "seed": cfg.train_cfg.seed,
            }
            store.write_checkpoint(thetas, zs, meta, ckpt)
            log = self.data_dir / "history.jsonl"
            for entry in report["iterations"]:
                for record in entry["history"]:
                    store.append_history(record, log)


def _run_view(state: AppState, run: pl.PipelineRun) -> dict:
    artifacts = {}
    for stage, artifact in run.artifacts.items():
        if isinstance(artifact, EnhancedPrompt):
            artifacts[stage.value] = {"kind": "enhanced_prompt", "text": artifact.text}
        elif isinstance(artifact, Frame):
            aid = f"{run.run_id}:{stage.value}"
            state.store_artifact(aid, store.frame_to_tvid_bytes(artifact))
            artifacts[stage.value] = {"kind": "frame", "artifact_id": aid}
        elif isinstance(artifact, Video):
            aid = f"{run.run_id}:{stage.value}"
            state.store_artifact(aid, store.tvid_bytes(artifact))
            artifacts[stage.value] = {"kind": "video", "artifact_id": aid}
    view = {
        "run_id": run.run_id,
        "task": run.task.value,
        "stage": run.stage.value,
        "status": run.status.value,
        "retry_counts": {s.value: c for s, c in run.retry_counts.items()},
        "artifacts": artifacts,
    }
    if run.status == pl.RunStatus.DONE:
        last = pl.STAGE_TABLE[run.task][-1]
        view["final_artifact_url"] = f"/v1/artifacts/{run.run_id}:{last.value}"
    return view


def _decode_videos(payload: dict) -> tuple[Frame | None, tuple[Video, ...]]:
    frame = None
    if payload.get("frame_b64"):
        try:
            raw = base64.b64decode(payload["frame_b64"])
        except Exception as exc:
            raise ApiError(400, "bad_tvid", f"frame_b64 does not decode: {exc}")
        frame = store.frame_from_tvid_bytes(raw)
    videos = []
    entries = payload.get("videos_b64") or []
    if not isinstance(entries, list):
        raise ApiError(400, "bad_request", "videos_b64 must be a list")
    for item in entries:
        try:
            raw = base64.b64decode(item)
        except Exception as exc:
            raise ApiError(400, "bad_tvid", f"videos_b64 entry does not decode: {exc}")
        videos.append(store.parse_tvid(raw))
    return frame, tuple(videos)


def _parse_train_config(payload: dict) -> DataFreeConfig:
    if not isinstance(payload, dict):
        raise ApiError(400, "bad_config", "config must be an object")
    cfg = payload.get("config", payload)
    if not isinstance(cfg, dict):
        raise ApiError(400, "bad_config", "config must be an object")
    try:
        judges = []
        for spec in cfg.get("judges", []):
            judges.append(
                JudgeSpec(JudgeKind(spec["kind"]), endpoint=spec.get("endpoint"))
            )
        train_cfg = TrainConfig(
            batch_size=int(cfg.get("batch_size", 4)),
            epochs=int(cfg.get("epochs", 50)),
            eta_theta=float(cfg.get("eta_theta", 0.05)),
            eta_z=float(cfg.get("eta_z", 0.01)),
            t_frames=int(cfg.get("t_frames", 6)),
            seed=int(cfg.get("seed", 0)),
        )
        kwargs = dict(
            iterations=int(cfg.get("iterations", 3)),
            prompts_per_iter=int(cfg.get("prompts", cfg.get("prompts_per_iter", 16))),
            candidate_noise_sigma=float(cfg.get("candidate_noise_sigma", 0.1)),
            train_cfg=train_cfg,
            hitl_mode=HitlMode(cfg.get("hitl_mode", "auto_oracle")),
        )
        if judges:
            kwargs["judges"] = tuple(judges)
        return DataFreeConfig(**kwargs)
    except ApiError:
        raise
    except (SopforgeError, KeyError, TypeError, ValueError) as exc:
        raise ApiError(400, "bad_config", f"invalid training config: {exc}")


def create_app(data_dir: str | None = None, system_seed: int = 0) -> FastAPI:
    app = FastAPI(title="sopforge", version="0.1.0")
    state = AppState(data_dir=data_dir, system_seed=system_seed)
    app.state.sopforge = state

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(SopforgeError)
    async def _domain_error(_req: Request, exc: SopforgeError):
        api = _to_api_error(exc)
        return JSONResponse(
            status_code=api.status,
            content={"error": {"code": api.code, "message": api.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "bad_request", "message": str(exc.errors()[:1])}},
        )

    async def _json_body(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise ApiError(400, "bad_request", "body is not valid JSON")
        if not isinstance(payload, dict):
            raise ApiError(400, "bad_request", "body must be a JSON object")
        return payload

    def _opt_str(payload: dict, key: str) -> str | None:
        value = payload.get(key)
        if value is not None and not isinstance(value, str):
            raise ApiError(400, "bad_request", f"{key} must be a string")
        return value

    def _opt_int(payload: dict, key: str, default: int) -> int:
        value = payload.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ApiError(400, "bad_request", f"{key} must be an integer")
        return value

    # ── pipeline runs ───────────────────────────────────────────────────────

    @app.post("/v1/runs", status_code=201)
    async def create_run(request: Request):
        payload = await _json_body(request)
        task_name = payload.get("task")
        try:
            task = pl.TaskKind(task_name)
        except ValueError:
            raise ApiError(400, "input_mismatch", f"unknown task {task_name!r}")
        frame, videos = _decode_videos(payload)
        inputs = pl.RunInputs(prompt=_opt_str(payload, "prompt"), frame=frame, videos=videos)
        t_frames = _opt_int(payload, "t_frames", 6)
        if not 1 <= t_frames <= 64:
            raise ApiError(400, "input_mismatch", "t_frames must be in 1..64")
        config = pl.PipelineConfig(seed=_opt_int(payload, "seed", 0), t_frames=t_frames)
        run = pl.create_run(task, inputs, config)
        state.add_run(run)
        with state.run_lock(run.run_id):
            pl.execute_stage(run, state.agent_params, state.modulation)
            if state.data_dir:
                store.persist_run(run, state.data_dir / "runs" / run.run_id)
        return _run_view(state, run)

    @app.get("/v1/runs")
    async def list_runs():
        with state.lock:
            runs = list(state.runs.values())
        return {"runs": [_run_view(state, r) for r in runs]}

    @app.get("/v1/runs/{run_id}")
    async def get_run(run_id: str):
        with state.run_lock(run_id):
            return _run_view(state, state.runs[run_id])

    @app.post("/v1/runs/{run_id}/decision")
    async def decide(run_id: str, request: Request):
        payload = await _json_body(request)
        try:
            stage = pl.StageId(payload.get("stage"))
            decision = pl.HumanDecision(payload.get("decision"))
        except ValueError as exc:
            raise ApiError(400, "bad_request", f"bad stage or decision: {exc}")
        with state.run_lock(run_id):
            run = state.runs[run_id]
            pl.apply_decision(run, stage, decision)
            if run.status == pl.RunStatus.RUNNING:
                pl.execute_stage(run, state.agent_params, state.modulation)
            if state.data_dir:
                store.persist_run(run, state.data_dir / "runs" / run.run_id)
            return _run_view(state, run)

    # ── review queue ────────────────────────────────────────────────────────

    @app.get("/v1/review")
    async def review_queue():
        with state.lock:
            items = [
                i for i in state.reviews.values() if i.status == ReviewStatus.PENDING_HUMAN
            ]
        return {
            "items": [
                {
                    "item_id": i.item_id,
                    "prompt": i.candidate_set.prompt.text,
                    "criterion": i.candidate_set.criterion.text,
                    "candidate_urls": [
                        f"/v1/artifacts/{i.item_id}:cand:{j}"
                        for j in range(len(i.candidate_set.candidates))
                    ],
                    "rankings": {
                        judge: list(r.order)
                        for judge, r in i.candidate_set.rankings.items()
                    },
                }
                for i in items
            ]
        }

    @app.post("/v1/review/{item_id}")
    async def review_decision(item_id: str, request: Request):
        payload = await _json_body(request)
        with state.lock:
            item = state.reviews.get(item_id)
        if item is None:
            raise ApiError(404, "unknown_item", f"no review item {item_id}")
        if payload.get("discard"):
            resolution = Resolution("discarded")
        elif "select" in payload:
            if not isinstance(payload["select"], int):
                raise ApiError(400, "bad_index", "select must be an integer")
            resolution = Resolution("accepted", payload["select"])
        else:
            raise ApiError(400, "bad_request", "body needs select or discard")
        with state.lock:
            datafree.resolve_review(item, resolution)
        job = state.active_job()
        if job is not None:
            with job.cond:
                job.cond.notify_all()
        return {
            "item_id": item.item_id,
            "status": item.status.value,
            "resolution": {
                "kind": item.resolution.kind,
                "index": item.resolution.index,
            },
        }

    # ── training jobs ───────────────────────────────────────────────────────

    @app.post("/v1/training", status_code=202)
    async def start_training(request: Request):
        payload = await _json_body(request)
        cfg = _parse_train_config(payload)
        with state.lock:
            for job in state.jobs.values():
                if job.active:
                    raise ApiError(409, "training_active", f"job {job.id} is active")
            job = TrainingJob(state, cfg)
            state.jobs[job.id] = job
        job.start()
        return {"training_id": job.id}

    @app.get("/v1/training/{training_id}")
    async def training_status(training_id: str):
        with state.lock:
            job = state.jobs.get(training_id)
        if job is None:
            raise ApiError(404, "unknown_training", f"no training job {training_id}")
        return job.status()

    # ── artifacts ───────────────────────────────────────────────────────────

    @app.get("/v1/artifacts/{artifact_id}")
    async def get_artifact(artifact_id: str, enc: str | None = None):
        with state.lock:
            data = state.artifacts.get(artifact_id)
        if data is None:
            raise ApiError(404, "unknown_artifact", f"no artifact {artifact_id}")
        if enc == "b64":
            return {"format": "tvid_b64", "data": base64.b64encode(data).decode("ascii")}
        return Response(content=data, media_type="application/octet-stream")

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(host: str = "127.0.0.1", port: int = 7700, data_dir: str | None = None,
          system_seed: int = 0):
    """Bind, print the actual port, and serve until interrupted."""
    import socket

    import uvicorn

    app = create_app(data_dir=data_dir, system_seed=system_seed)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound = sock.getsockname()[1]
    print(f"sopforge serving on http://{host}:{bound}", flush=True)
    config = uvicorn.Config(app, log_level="warning")
    uvicorn.Server(config).run(sockets=[sock])
