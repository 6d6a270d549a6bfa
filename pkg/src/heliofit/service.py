"""HTTP service behind the parameter-steering UI and scripting clients.

Render/relight/classify/metrics endpoints are pure compute over query
parameters; only the fit-job store carries state.  Jobs run on a single
worker thread (fits are CPU-heavy) and survive restarts when a persistence
directory is configured.
"""

from __future__ import annotations

import io
import json
import math
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response, UploadFile
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .config import AppConfig
from .envmap import HdrImage, percentile_expose, render_lm_dome
from .fitting import fit
from .geometry import Direction
from .hdrio import HdrIoError, read_hdr, write_hdr
from .metrics import cloud_coverage, rmse, si_rmse, weather_bin
from .presets import PARAM_RANGES, PRESETS
from .sky import LMParams, SUN_ZENITH_CUTOFF_DEG
from .transport import apply_transport, build_transport, render_mirror_sphere

_PARAM_FIELDS = (
    "sky_color_r", "sky_color_g", "sky_color_b", "turbidity",
    "sun_color_r", "sun_color_g", "sun_color_b", "beta", "kappa",
    "sun_zenith_rad", "sun_azimuth_rad",
)


@dataclass
class JobRecord:
    job_id: str
    kind: str
    state: str  # queued -> running -> done | failed
    submitted_at: float
    result: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "submitted_at": self.submitted_at,
            "result": self.result,
            "error": self.error,
        }


@dataclass
class JobStore:
    """In-memory job table with optional directory persistence."""

    persist_dir: str | None = None
    _records: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if self.persist_dir:
            os.makedirs(os.path.join(self.persist_dir, "uploads"), exist_ok=True)
            path = self._table_path()
            if os.path.exists(path):
                with open(path) as f:
                    for rec in json.load(f):
                        self._records[rec["job_id"]] = JobRecord(**rec)

    def _table_path(self) -> str:
        return os.path.join(self.persist_dir, "jobs.json")

    def _flush(self) -> None:
        if not self.persist_dir:
            return
        tmp = self._table_path() + ".tmp"
        with open(tmp, "w") as f:
            json.dump([r.to_dict() for r in self._records.values()], f, sort_keys=True)
        os.replace(tmp, self._table_path())

    def create(self, kind: str) -> JobRecord:
        rec = JobRecord(job_id=uuid.uuid4().hex, kind=kind, state="queued",
                        submitted_at=time.time())
        with self._lock:
            self._records[rec.job_id] = rec
            self._flush()
        return rec

    def update(self, job_id: str, **changes) -> None:
        with self._lock:
            rec = self._records[job_id]
            for k, v in changes.items():
                setattr(rec, k, v)
            self._flush()
        return None

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._records.get(job_id)

    def upload_path(self, job_id: str) -> str | None:
        if not self.persist_dir:
            return None
        return os.path.join(self.persist_dir, "uploads", f"{job_id}.pfm")


def _parse_params(query: dict) -> LMParams:
    vals = {}
    for name in _PARAM_FIELDS:
        if name not in query:
            raise HTTPException(400, f"missing parameter {name}")
        try:
            vals[name] = float(query[name])
        except ValueError as exc:
            raise HTTPException(400, f"bad value for {name}: {exc}") from exc
    for name, (lo, hi) in PARAM_RANGES.items():
        if name == "sun_azimuth_rad":
            continue  # azimuth wraps
        if not (lo <= vals[name] <= hi):
            raise HTTPException(400, f"{name}={vals[name]} outside [{lo}, {hi}]")
    if math.degrees(vals["sun_zenith_rad"]) > SUN_ZENITH_CUTOFF_DEG:
        raise HTTPException(400, f"sun_zenith_rad exceeds the "
                                 f"{SUN_ZENITH_CUTOFF_DEG:.0f} degree cutoff")
    try:
        return LMParams.from_dict(vals)
    except ValueError as exc:
        raise HTTPException(400, str(exc)) from exc


def _to_png(display: np.ndarray) -> bytes:
    arr = (np.clip(display, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    img = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def _display(linear: np.ndarray, divisor: float, exposure_ev: float) -> np.ndarray:
    # 99th-percentile re-exposure, then gamma 2.2, clamped to [0, 1]
    scaled = np.maximum(linear / divisor * (2.0 ** exposure_ev), 0.0)
    return np.clip(scaled, 0.0, 1.0) ** (1.0 / 2.2)


def _upscale(data: np.ndarray, size: int) -> np.ndarray:
    reps = max(1, size // data.shape[0])
    out = np.repeat(np.repeat(data, reps, axis=0), reps, axis=1)
    return out[:size, :size]


def create_app(cfg: AppConfig | None = None) -> FastAPI:
    cfg = cfg or AppConfig()
    app = FastAPI(title="heliofit", version="0.1.0")
    store = JobStore(persist_dir=cfg.service.persist_path)
    jobs: "queue.Queue[tuple[str, bytes]]" = queue.Queue()
    transports: dict = {}
    transports_lock = threading.Lock()

    def transport_for(env_size: int):
        with transports_lock:
            if env_size not in transports:
                transports[env_size] = build_transport(cfg.scene, env_size)
            return transports[env_size]

    targets: dict = {}

    def run_job(job_id: str, payload: bytes) -> None:
        store.update(job_id, state="running")
        try:
            tmp = store.upload_path(job_id)
            if tmp is None:
                tmp = os.path.join("/tmp", f"heliofit-{job_id}.pfm")
            with open(tmp, "wb") as f:
                f.write(payload)
            img = read_hdr(tmp)
            targets[job_id] = img
            result = fit(img, cfg=cfg.fit, transport=transport_for(img.width))
            record = result.to_record(job_id)
            store.update(job_id, state="done", result=record)
        except Exception as exc:  # noqa: BLE001 - job boundary
            store.update(job_id, state="failed", error=str(exc))

    def worker() -> None:
        while True:
            job_id, payload = jobs.get()
            run_job(job_id, payload)
            jobs.task_done()

    threading.Thread(target=worker, daemon=True, name="heliofit-fit-worker").start()

    @app.get("/api/render")
    def api_render(request: Request, size: int = 128, exposure: float = 0.0):
        params = _parse_params(dict(request.query_params))
        if not (8 <= size <= 1024):
            raise HTTPException(400, "size outside [8, 1024]")
        dome = render_lm_dome(params, size)
        _, divisor = percentile_expose(dome)
        png = _to_png(_display(dome.data, divisor, exposure))
        return Response(png, media_type="image/png",
                        headers={"X-Percentile-Divisor": repr(divisor)})

    @app.get("/api/relight")
    def api_relight(request: Request, size: int = 128, exposure: float = 0.0):
        params = _parse_params(dict(request.query_params))
        if not (8 <= size <= 512):
            raise HTTPException(400, "size outside [8, 512]")
        T = transport_for(cfg.service.env_size)
        dome = render_lm_dome(params, cfg.service.env_size)
        _, divisor = percentile_expose(dome)
        diffuse = apply_transport(T, dome)
        ball = render_mirror_sphere(dome, size)
        left = _display(_upscale(diffuse.data, size), divisor, exposure)
        right = _display(ball.data, divisor, exposure)
        strip = np.concatenate([left, right], axis=1)
        return Response(_to_png(strip), media_type="image/png",
                        headers={"X-Percentile-Divisor": repr(divisor)})

    @app.get("/api/classify")
    def api_classify(request: Request, size: int = 128):
        params = _parse_params(dict(request.query_params))
        dome = render_lm_dome(params, size)
        coverage = cloud_coverage(dome, params.sun, cfg.tau_cloud)
        wbin = weather_bin(coverage, params.sun.zenith_deg)
        return {"coverage": coverage, "category": wbin.category,
                "sun_zenith_deg": params.sun.zenith_deg}

    @app.post("/api/fit")
    async def api_fit(file: UploadFile):
        payload = await file.read()
        if len(payload) > cfg.service.upload_limit_bytes:
            raise HTTPException(413, "upload exceeds the configured limit")
        if not payload:
            raise HTTPException(400, "empty upload")
        rec = store.create("fit")
        jobs.put((rec.job_id, payload))
        return {"job_id": rec.job_id}

    @app.get("/api/jobs/{job_id}")
    def api_job(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise HTTPException(404, "unknown job")
        return rec.to_dict()

    @app.get("/api/presets")
    def api_presets():
        return {
            "presets": {name: p.to_dict() for name, p in PRESETS.items()},
            "ranges": {name: list(r) for name, r in PARAM_RANGES.items()},
        }

    @app.get("/api/metrics")
    def api_metrics(request: Request, job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise HTTPException(404, "unknown job")
        target = targets.get(job_id)
        if target is None:
            path = store.upload_path(job_id)
            if path and os.path.exists(path):
                try:
                    target = read_hdr(path)
                    targets[job_id] = target
                except HdrIoError as exc:
                    raise HTTPException(500, f"stored target unreadable: {exc}") from exc
        if target is None:
            raise HTTPException(404, "job target is no longer available")
        query = dict(request.query_params)
        if all(name in query for name in _PARAM_FIELDS):
            params = _parse_params(query)
        elif rec.state == "done" and rec.result:
            params = LMParams.from_dict(rec.result)
        else:
            raise HTTPException(400, "job not done; pass explicit parameters")
        dome = render_lm_dome(params, target.width)
        T = transport_for(target.width)
        rt = apply_transport(T, target)
        rd = apply_transport(T, dome)
        return {
            "rmse_texture": rmse(dome, target),
            "si_rmse_texture": si_rmse(dome, target),
            "rmse_render": rmse(rd, rt),
            "si_rmse_render": si_rmse(rd, rt),
        }

    if cfg.service.static_dir:
        app.mount("/", StaticFiles(directory=cfg.service.static_dir, html=True), name="ui")

    return app
