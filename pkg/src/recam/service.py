"""HTTP preview service consumed by the studio frontend.

Single-frame previews render synchronously so the UI stays responsive;
full-clip renders run as background jobs with forward-only status
transitions (queued -> running -> done|failed).
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from . import video_io
from .anchor import render_anchor_video
from .errors import TrajectoryParseError
from .geometry import render_view
from .trajectory import compile_trajectory, parse_trajectory

_STATUS_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


@dataclass
class JobRecord:
    id: str
    kind: str
    status: str = "queued"
    progress: float = 0.0
    output_paths: list = field(default_factory=list)
    error: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "status": self.status,
                "progress": self.progress, "output_paths": self.output_paths,
                "error": self.error}


class JobStore:
    """Thread-safe registry enforcing forward-only status transitions."""

    def __init__(self):
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()

    def create(self, kind: str) -> JobRecord:
        job = JobRecord(id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)

    def transition(self, job_id: str, status: str, progress: float | None = None,
                   output_paths=None, error: str = "") -> None:
        with self._lock:
            job = self._jobs[job_id]
            if _STATUS_ORDER[status] < _STATUS_ORDER[job.status]:
                raise ValueError(f"illegal transition {job.status} -> {status}")
            job.status = status
            if progress is not None:
                job.progress = progress
            if output_paths is not None:
                job.output_paths = list(output_paths)
            if error:
                job.error = error


class PreviewRequest(BaseModel):
    frame_index: int
    move_list: list[dict]
    splat_radius: int = 1


class RenderRequest(BaseModel):
    move_list: list[dict]
    splat_radius: int = 1


class _ClipState:
    """Loaded clip, depths and intrinsics for one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.clip = None
        self.depths = None
        self.intrinsics = None
        try:
            self.clip = video_io.load_clip(self.data_dir)
            self.depths = video_io.load_depths(self.data_dir)
            self.intrinsics = video_io.intrinsics_from_meta(video_io.load_meta(self.data_dir))
        except (FileNotFoundError, ValueError):
            self.clip = None

    @property
    def loaded(self) -> bool:
        return self.clip is not None


def _frame_to_png(pixels: np.ndarray) -> bytes:
    data = np.rint(pixels * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _parse_moves(move_list: list, frames: int):
    """Validate a move-list fragment by round-tripping the full wire format."""
    return parse_trajectory(json.dumps({"frames": frames, "moves": move_list}))


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="recam preview service")
    state = _ClipState(data_dir)
    jobs = JobStore()

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = [{"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
                  for err in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": fields})

    @app.exception_handler(TrajectoryParseError)
    async def trajectory_handler(request: Request, exc: TrajectoryParseError):
        return JSONResponse(status_code=400,
                            content={"detail": [{"field": exc.field or "moves",
                                                 "message": str(exc)}]})

    def _require_clip():
        if not state.loaded:
            return JSONResponse(status_code=409,
                                content={"detail": "no clip loaded in the data directory"})
        return None

    @app.get("/api/clip/info")
    def clip_info():
        if (err := _require_clip()) is not None:
            return err
        k = state.intrinsics
        return {"frames": len(state.clip), "width": k.width, "height": k.height,
                "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}}

    @app.post("/api/preview")
    def preview(req: PreviewRequest):
        if (err := _require_clip()) is not None:
            return err
        n = len(state.clip)
        if not 0 <= req.frame_index < n:
            return JSONResponse(status_code=400,
                                content={"detail": [{"field": "frame_index",
                                                     "message": f"must be in [0, {n})"}]})
        if req.splat_radius < 0:
            return JSONResponse(status_code=400,
                                content={"detail": [{"field": "splat_radius",
                                                     "message": "must be >= 0"}]})
        spec = _parse_moves(req.move_list, n)
        traj = compile_trajectory(spec, state.intrinsics)
        cam = traj[req.frame_index]
        frame, mask = render_view(state.clip.frames[req.frame_index],
                                  state.depths[req.frame_index],
                                  state.intrinsics, cam.intrinsics, cam.pose,
                                  req.splat_radius)
        fraction = float(mask.mean())
        return Response(content=_frame_to_png(frame.pixels), media_type="image/png",
                        headers={"X-Valid-Fraction": repr(fraction)})

    @app.post("/api/trajectory/render")
    def trajectory_render(req: RenderRequest):
        if (err := _require_clip()) is not None:
            return err
        n = len(state.clip)
        spec = _parse_moves(req.move_list, n)
        if req.splat_radius < 0:
            return JSONResponse(status_code=400,
                                content={"detail": [{"field": "splat_radius",
                                                     "message": "must be >= 0"}]})
        job = jobs.create("render")
        out_dir = state.data_dir / "renders" / job.id

        def run():
            try:
                jobs.transition(job.id, "running", progress=0.0)
                traj = compile_trajectory(spec, state.intrinsics)
                anchor, masks = render_anchor_video(state.clip, state.depths, traj,
                                                    req.splat_radius)
                video_io.save_clip(anchor, out_dir)
                video_io.save_masks(masks, out_dir)
                jobs.transition(job.id, "done", progress=1.0,
                                output_paths=[str(out_dir)])
            except Exception as e:  # failures surface through the job record
                jobs.transition(job.id, "failed", error=str(e))

        threading.Thread(target=run, daemon=True).start()
        return job.to_dict()

    @app.get("/api/job/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown job {job_id}"})
        return job.to_dict()

    return app
