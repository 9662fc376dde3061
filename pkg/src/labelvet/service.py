"""HTTP API over pipeline runs.

The service exposes the review workflow of every run under one runs root:
list runs, page through a run's prioritized review queue, submit reviews,
fetch item content, and download the export bundle.  It can also serve the
static files of the review console so one process hosts both the API and
the UI.

Error mapping: unknown run/item -> 404, out-of-order operation -> 409,
duplicate review -> 409, invalid label -> 422.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .data import DataError
from .pipeline import (
    PipelineError,
    ReviewConflictError,
    Run,
    StageError,
    discover_runs,
    stage_index,
)

__all__ = ["create_app"]


class RunSummary(BaseModel):
    run_id: str
    stage: str
    n_items: int
    rule: str
    review_mode: str
    budget: int | None
    reviews_used: int
    pending: int


class QueueItemModel(BaseModel):
    item_id: int
    content_kind: str
    content: dict
    label_space: list[str]
    machine_label: int | None
    machine_label_name: str | None
    machine_reasoning: str | None
    critic_reasoning: str | None
    error_estimate: float | None
    decision: str | None
    perplexity: float | None


class QueuePage(BaseModel):
    run_id: str
    stage: str
    page: int
    page_size: int
    total_pending: int
    budget: int
    reviews_used: int
    items: list[QueueItemModel]


class ReviewRequest(BaseModel):
    item_id: int = Field(ge=0)
    label: int = Field(ge=0)
    reviewer: str = Field(min_length=1)


class ReviewAccepted(BaseModel):
    run_id: str
    item_id: int
    stage: str
    reviews_used: int
    pending: int


class ExportPayload(BaseModel):
    run_id: str
    metrics: dict
    corrected: list[dict]


class _RunRegistry:
    """Caches Run objects so every request shares one lock per run."""

    def __init__(self, runs_root: Path):
        self.runs_root = runs_root
        self._runs: dict[str, Run] = {}
        self._lock = threading.Lock()

    def get(self, run_id: str) -> Run:
        with self._lock:
            if run_id not in self._runs:
                run_dir = self.runs_root / run_id
                try:
                    self._runs[run_id] = Run.load(run_dir)
                except PipelineError:
                    raise HTTPException(404, f"no run named {run_id!r}")
            return self._runs[run_id]

    def all(self) -> list[Run]:
        runs = discover_runs(self.runs_root)
        with self._lock:
            for run in runs:
                self._runs.setdefault(run.state.run_id, run)
            return [self._runs[r.state.run_id] for r in runs]


def create_app(runs_root: Path | str, console_dir: Path | str | None = None) -> FastAPI:
    """Build the API app for all runs stored under ``runs_root``."""
    registry = _RunRegistry(Path(runs_root))
    app = FastAPI(title="labelvet review service", version="1.0")

    @app.exception_handler(StageError)
    async def _stage_error(request, exc: StageError):
        return JSONResponse(
            status_code=409,
            content={"detail": str(exc), "stage": exc.stage})

    @app.exception_handler(ReviewConflictError)
    async def _conflict(request, exc: ReviewConflictError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(DataError)
    async def _data_error(request, exc: DataError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(PipelineError)
    async def _pipeline_error(request, exc: PipelineError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/runs", response_model=list[RunSummary])
    def list_runs() -> list[dict]:
        return [run.summary() for run in registry.all()]

    @app.get("/runs/{run_id}", response_model=RunSummary)
    def run_summary(run_id: str) -> dict:
        return registry.get(run_id).summary()

    @app.get("/runs/{run_id}/queue", response_model=QueuePage)
    def review_queue(
        run_id: str,
        page: int = Query(0, ge=0),
        page_size: int = Query(20, ge=1, le=200),
    ) -> dict:
        return registry.get(run_id).review_queue(page=page, page_size=page_size)

    @app.post("/runs/{run_id}/reviews", response_model=ReviewAccepted)
    def submit_review(run_id: str, body: ReviewRequest) -> dict:
        run = registry.get(run_id)
        return run.submit_review(body.item_id, body.label, body.reviewer)

    @app.get("/runs/{run_id}/export", response_model=ExportPayload)
    def export_run(run_id: str) -> dict:
        run = registry.get(run_id)
        if stage_index(run.stage) < stage_index("corrected"):
            raise StageError(
                f"export requires a corrected run, run is at {run.stage!r}",
                run.stage)
        return run.export_payload()

    @app.get("/items/{item_id}/content")
    def item_content(item_id: int, run: str | None = Query(None)):
        if run is None:
            runs = registry.all()
            if len(runs) != 1:
                raise HTTPException(
                    422, "pass ?run=<run_id> when several runs are served")
            run_id = runs[0].state.run_id
        else:
            run_id = run
        run = registry.get(run_id)
        dataset = run.dataset()
        if not 0 <= item_id < dataset.n:
            raise HTTPException(404, f"no item {item_id} in run {run_id!r}")
        content = dataset[item_id].content
        kind = content["kind"]
        if kind == "text":
            return PlainTextResponse(content["text"])
        if kind == "image":
            image_path = Path(content["image_ref"])
            if not image_path.is_absolute():
                image_path = run.run_dir / image_path
            if not image_path.is_file():
                raise HTTPException(404, f"image for item {item_id} not found")
            return Response(image_path.read_bytes(), media_type="image/png")
        return JSONResponse(dict(content))

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app
