"""HTTP protection service: upload a photo, poll the job, download the
protected PNG.

Jobs run on a bounded worker pool, one attack per worker. Uploaded
originals and outputs live under a storage directory and are deleted once
their TTL expires; a protection tool must not itself become a photo
archive. The attack backend is injectable so tests and the UI can run
against a fast stub.
"""

from __future__ import annotations


import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .attack import PRESET_NAMES, AttackConfig, ProtectionResult, protect
from .errors import DecodeError, FaceveilError
from .imaging import ImageTensor, decode, encode_png

# image in, preset name and seed in, protection result out
Protector = Callable[[ImageTensor, str, int], ProtectionResult]

_STATES = ("queued", "running", "done", "failed")
_TRANSITIONS = {("queued", "running"), ("running", "done"), ("running", "failed")}


@dataclass
class ServiceConfig:
    storage_dir: Path
    ttl_seconds: float = 3600.0
    workers: int = 1
    presets: tuple[str, ...] = PRESET_NAMES
    max_upload_bytes: int = 20 * 1024 * 1024
    sweep_interval: float = 5.0

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(storage_dir=Path(os.environ.get("FACEVEIL_STORAGE", "/tmp/faceveil")),
                   ttl_seconds=float(os.environ.get("FACEVEIL_TTL_SECONDS", "3600")))

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        """JSON config for presets and service limits; storage and TTL can
        still be overridden by the environment variables."""
        import json
        body = json.loads(Path(path).read_text())
        base = cls.from_env()
        return cls(
            storage_dir=Path(body.get("storage_dir", base.storage_dir)),
            ttl_seconds=float(body.get("ttl_seconds", base.ttl_seconds)),
            workers=int(body.get("workers", base.workers)),
            presets=tuple(body.get("presets", list(base.presets))),
            max_upload_bytes=int(body.get("max_upload_bytes", base.max_upload_bytes)),
            sweep_interval=float(body.get("sweep_interval", base.sweep_interval)),
        )


@dataclass
class ProtectJob:
    job_id: str
    preset: str
    seed: int
    state: str = "queued"
    created_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    input_path: Path | None = None
    output_path: Path | None = None
    per_model_displacement: dict[str, float] | None = None
    lpips_cost: float | None = None
    error: str | None = None

    def to_public(self) -> dict:
        out = {"job_id": self.job_id, "state": self.state, "preset": self.preset,
               "seed": self.seed}
        if self.state == "done":
            out["per_model_displacement"] = self.per_model_displacement
            out["lpips_cost"] = self.lpips_cost
        if self.state == "failed":
            out["error"] = self.error
        return out


class JobStore:
    """In-memory job table with a storage directory for image payloads.
    State transitions are guarded; expired jobs and their files are swept."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._jobs: dict[str, ProtectJob] = {}
        self._lock = threading.RLock()
        config.storage_dir.mkdir(parents=True, exist_ok=True)

    def create(self, preset: str, seed: int, image_bytes: bytes) -> ProtectJob:
        job_id = uuid.uuid4().hex
        input_path = self.config.storage_dir / f"{job_id}.in"
        input_path.write_bytes(image_bytes)
        job = ProtectJob(job_id=job_id, preset=preset, seed=seed, input_path=input_path)
        with self._lock:
            self._jobs[job_id] = job
        return job

    def get(self, job_id: str) -> ProtectJob | None:
        with self._lock:
            return self._jobs.get(job_id)

    def transition(self, job_id: str, state: str, **updates) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if (job.state, state) not in _TRANSITIONS:
                raise RuntimeError(f"illegal transition {job.state} -> {state}")
            job.state = state
            for key, value in updates.items():
                setattr(job, key, value)
            if state in ("done", "failed"):
                job.finished_at = time.time()

    def sweep_expired(self, now: float | None = None) -> int:
        """Delete jobs (and their files) older than the TTL."""
        now = now if now is not None else time.time()
        removed = 0
        with self._lock:
            for job_id in list(self._jobs):
                job = self._jobs[job_id]
                if now - job.created_at < self.config.ttl_seconds:
                    continue
                if job.state in ("queued", "running"):
                    continue
                for p in (job.input_path, job.output_path):
                    if p is not None and p.exists():
                        p.unlink()
                del self._jobs[job_id]
                removed += 1
        return removed

    def stored_files(self) -> list[Path]:
        return sorted(self.config.storage_dir.glob("*"))


def default_protector(ensemble) -> Protector:
    def run(image: ImageTensor, preset: str, seed: int) -> ProtectionResult:
        return protect(image, ensemble, AttackConfig.from_preset(preset), seed=seed)
    return run


def mock_protector(noise: float = 2.0 / 255.0) -> Protector:
    """Stub backend: real face detection, then seeded noise and fabricated
    scores instead of the attack. Behaviorally faithful (NoFaceFound on
    faceless uploads) but instant; for service tests and UI development."""
    import numpy as np

    from .detection import BlobFaceDetector, detect_faces
    from .errors import NoFaceFound

    detector = BlobFaceDetector()

    def run(image: ImageTensor, preset: str, seed: int) -> ProtectionResult:
        cfg = AttackConfig.from_preset(preset)
        dets = detect_faces(image, detector)
        if not dets:
            raise NoFaceFound("no face detected")
        rng = np.random.default_rng(seed)
        perturbed = np.clip(
            image.pixels + rng.uniform(-noise, noise, image.shape), 0, 1)
        return ProtectionResult(
            protected=ImageTensor(perturbed.astype(np.float32)),
            per_model_displacement={"mock-a": 0.8, "mock-b": 0.6},
            lpips_cost=0.01,
            objective_trace=[0.0] * (cfg.steps + 1),
            config=cfg,
            faces_attacked=len(dets))
    return run


class _WorkerPool:
    def __init__(self, store: JobStore, protector: Protector, n_workers: int):
        self.store = store
        self.protector = protector
        self.tasks: queue.Queue[str | None] = queue.Queue()
        self.threads = [threading.Thread(target=self._run, daemon=True)
                        for _ in range(max(1, n_workers))]
        for t in self.threads:
            t.start()

    def submit(self, job_id: str) -> None:
        self.tasks.put(job_id)

    def _run(self) -> None:
        while True:
            job_id = self.tasks.get()
            if job_id is None:
                return
            job = self.store.get(job_id)
            if job is None:
                continue
            self.store.transition(job_id, "running")
            try:
                image = decode(job.input_path.read_bytes())
                result = self.protector(image, job.preset, job.seed)
                out_path = self.store.config.storage_dir / f"{job_id}.png"
                out_path.write_bytes(encode_png(result.protected))
                self.store.transition(
                    job_id, "done", output_path=out_path,
                    per_model_displacement=result.per_model_displacement,
                    lpips_cost=result.lpips_cost)
            except FaceveilError as exc:
                self.store.transition(job_id, "failed",
                                      error=f"{type(exc).__name__}: {exc}")
            except Exception as exc:  # keep the worker alive
                self.store.transition(job_id, "failed", error=f"InternalError: {exc}")

    def stop(self) -> None:
        for _ in self.threads:
            self.tasks.put(None)


def create_app(config: ServiceConfig, protector: Protector) -> FastAPI:
    store = JobStore(config)
    pool = _WorkerPool(store, protector, config.workers)
    stop_event = threading.Event()

    def _sweeper():
        while not stop_event.wait(config.sweep_interval):
            store.sweep_expired()

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app):
        sweeper = threading.Thread(target=_sweeper, daemon=True)
        sweeper.start()
        yield
        stop_event.set()
        pool.stop()

    app = FastAPI(title="faceveil protection service", lifespan=lifespan)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.store = store
    app.state.pool = pool

    @app.get("/v1/presets")
    def list_presets():
        return {"presets": list(config.presets), "default": "standard"}

    @app.post("/v1/protect", status_code=202)
    async def submit_protect(image: UploadFile = File(...),
                             preset: str = Form("standard"),
                             seed: int = Form(0)):
        if preset not in config.presets:
            raise HTTPException(status_code=400,
                                detail=f"ConfigError: unknown preset {preset!r}")
        data = await image.read()
        if len(data) > config.max_upload_bytes:
            raise HTTPException(status_code=400,
                                detail="UploadTooLarge: image exceeds size cap")
        try:
            decode(data)
        except DecodeError as exc:
            raise HTTPException(status_code=400, detail=f"DecodeError: {exc}")
        job = store.create(preset=preset, seed=seed, image_bytes=data)
        pool.submit(job.job_id)
        return {"job_id": job.job_id}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return job.to_public()

    @app.get("/v1/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        if job.state != "done":
            detail = {"state": job.state}
            if job.error:
                detail["error"] = job.error
            return JSONResponse(status_code=409, content=detail)
        return Response(content=job.output_path.read_bytes(), media_type="image/png")

    return app
