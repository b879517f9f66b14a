"""Stateless HTTP facade: constrained generation, per-step trajectory
streaming over SSE, refinement, and evaluation.

Uploaded canvases may be cached under a content-hash canvas_id so
interactive clients re-send only the id. A bounded semaphore caps
concurrent sampling runs; excess requests get 429.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
from collections import OrderedDict
from typing import Iterator, Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .canvas import Raster, compose_four_channel, extract_salbox, load_png
from .diffusion import (
    CategoryCodec,
    ConstraintSpec,
    DiffusionSchedule,
    decode_layout_state,
    refine as diffusion_refine,
    sample as diffusion_sample,
)
from .geometry import BBox, Element, Layout
from .metrics import evaluate_layout
from .model import Conditioning, NoiseModel
from .numerics import checkpoint_hash
from .training import load_model

MAX_SAMPLES_PER_REQUEST = 16
CANVAS_CACHE_SIZE = 32
CANVAS_CACHE_TTL_S = 3600.0

TaskName = Literal["c_to_sp", "cs_to_p", "completion", "refinement", "unconstrained"]


class ElementSpecIn(BaseModel):
    category: Literal["logo", "text", "underlay"]
    cx: Optional[float] = None
    cy: Optional[float] = None
    w: Optional[float] = None
    h: Optional[float] = None
    anchored: bool = False


class GenerateRequest(BaseModel):
    task: TaskName = "unconstrained"
    elements: list[ElementSpecIn] = Field(default_factory=list)
    num_samples: int = 1
    seed: Optional[int] = None
    canvas_id: Optional[str] = None
    canvas_png: Optional[str] = None  # base64
    saliency_png: Optional[str] = None  # base64


class RefineRequest(BaseModel):
    layout: dict
    strength: float = 0.1
    seed: Optional[int] = None
    canvas_id: Optional[str] = None
    canvas_png: Optional[str] = None
    saliency_png: Optional[str] = None


class EvaluateRequest(BaseModel):
    layout: dict
    canvas_id: Optional[str] = None
    canvas_png: Optional[str] = None
    saliency_png: Optional[str] = None


class CanvasCache:
    """Content-addressed LRU with TTL eviction."""

    def __init__(self, capacity: int = CANVAS_CACHE_SIZE, ttl_s: float = CANVAS_CACHE_TTL_S):
        self.capacity = capacity
        self.ttl_s = ttl_s
        self._items: OrderedDict[str, tuple[float, Raster, Raster]] = OrderedDict()
        self._lock = threading.Lock()

    def put(self, canvas: Raster, saliency: Raster, raw: bytes) -> str:
        key = hashlib.sha256(raw).hexdigest()[:16]
        with self._lock:
            self._items[key] = (time.monotonic(), canvas, saliency)
            self._items.move_to_end(key)
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
        return key

    def get(self, key: str) -> Optional[tuple[Raster, Raster]]:
        with self._lock:
            entry = self._items.get(key)
            if entry is None:
                return None
            stamp, canvas, saliency = entry
            if time.monotonic() - stamp > self.ttl_s:
                del self._items[key]
                return None
            self._items.move_to_end(key)
            return canvas, saliency


class InferenceEngine:
    """Frozen model snapshot plus request-scoped sampling helpers."""

    def __init__(self, model: NoiseModel, sched: DiffusionSchedule, checkpoint_path=None):
        self.model = model
        self.sched = sched
        self.codec = CategoryCodec()
        self.checkpoint_path = checkpoint_path
        self.checkpoint_hash = checkpoint_hash(checkpoint_path) if checkpoint_path else None

    @classmethod
    def from_checkpoint(cls, path) -> "InferenceEngine":
        model, sched, _ = load_model(path, use_ema=True)
        return cls(model, sched, checkpoint_path=path)


def _decode_png_b64(data: str) -> tuple[Raster, bytes]:
    raw = base64.b64decode(data)
    return load_png(io.BytesIO(raw)), raw


def _spec_from_elements(task: str, elements: list[ElementSpecIn], n: int, codec) -> ConstraintSpec:
    if len(elements) > n:
        raise HTTPException(400, f"at most {n} elements supported, got {len(elements)}")
    for i, e in enumerate(elements):
        if task == "cs_to_p" and (e.w is None or e.h is None):
            raise HTTPException(400, f"task cs_to_p requires w and h on element {i}")
        if task == "completion" and e.anchored and None in (e.cx, e.cy, e.w, e.h):
            raise HTTPException(400, f"anchored element {i} needs cx, cy, w and h")
    built = []
    anchored = []
    for e in elements:
        built.append(
            Element(e.category, BBox(e.cx or 0.0, e.cy or 0.0, e.w or 0.0, e.h or 0.0))
        )
        anchored.append(e.anchored)
    layout = Layout(built)
    return ConstraintSpec.from_layout(task, layout, n, codec, anchored if any(anchored) else None)


def create_app(checkpoint=None, engine: Optional[InferenceEngine] = None, max_inflight: int = 4) -> FastAPI:
    app = FastAPI(title="posterdiff", version="0.1.0")
    if engine is None and checkpoint is not None:
        engine = InferenceEngine.from_checkpoint(checkpoint)
    cache = CanvasCache()
    slots = threading.BoundedSemaphore(max_inflight)
    app.state.slots = slots

    @app.exception_handler(RequestValidationError)
    def schema_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def need_engine() -> InferenceEngine:
        if engine is None:
            raise HTTPException(503, "model not loaded")
        return engine

    def resolve_canvases(req) -> tuple[Raster, Raster, str]:
        if req.canvas_id:
            hit = cache.get(req.canvas_id)
            if hit is None:
                raise HTTPException(400, f"unknown canvas_id {req.canvas_id!r}")
            return hit[0], hit[1], req.canvas_id
        if not req.canvas_png or not req.saliency_png:
            raise HTTPException(400, "provide canvas_id or both canvas_png and saliency_png")
        try:
            canvas, raw_c = _decode_png_b64(req.canvas_png)
            saliency, raw_s = _decode_png_b64(req.saliency_png)
        except Exception as exc:
            raise HTTPException(400, f"could not decode PNG payloads: {exc}") from exc
        if saliency.channels != 1:
            raise HTTPException(400, "saliency must be a single-channel PNG")
        eng = need_engine()
        res = eng.model.cfg.resolution
        if (canvas.height, canvas.width) != (res, res) or (saliency.height, saliency.width) != (res, res):
            raise HTTPException(400, f"canvas and saliency must be {res}x{res}")
        key = cache.put(canvas, saliency, raw_c + raw_s)
        return canvas, saliency, key

    def conditioning_for(canvas: Raster, saliency: Raster) -> Conditioning:
        eng = need_engine()
        img4 = compose_four_channel(canvas, saliency)
        return Conditioning.from_raster(img4, extract_salbox(saliency), eng.model.cfg)

    def acquire_slot():
        if not slots.acquire(blocking=False):
            raise HTTPException(429, "too many concurrent sampling runs")

    @app.get("/v1/health")
    def health():
        return {"ready": engine is not None}

    @app.get("/v1/model")
    def model_info():
        eng = need_engine()
        return {
            "config": eng.model.cfg.to_dict(),
            "parameter_count": eng.model.num_parameters(),
            "checkpoint_hash": eng.checkpoint_hash,
            "timesteps": eng.sched.timesteps,
        }

    def validate_generate(req: GenerateRequest) -> None:
        if req.num_samples < 1:
            raise HTTPException(400, "num_samples must be >= 1")
        if req.num_samples > MAX_SAMPLES_PER_REQUEST:
            raise HTTPException(400, f"num_samples capped at {MAX_SAMPLES_PER_REQUEST}")

    @app.post("/v1/generate")
    def generate(req: GenerateRequest):
        eng = need_engine()
        validate_generate(req)
        canvas, saliency, canvas_key = resolve_canvases(req)
        spec = _spec_from_elements(req.task, req.elements, eng.model.cfg.max_elements, eng.codec)
        cond = conditioning_for(canvas, saliency)
        base_seed = int(np.random.default_rng().integers(0, 2**31)) if req.seed is None else req.seed
        acquire_slot()
        try:
            t0 = time.perf_counter()
            samples = []
            for i in range(req.num_samples):
                seed = base_seed + i
                result = diffusion_sample(
                    eng.model, eng.sched, cond, spec, seed=seed, codec=eng.codec, record_trajectory=False
                )
                report = evaluate_layout(result.layout, canvas, saliency)
                samples.append({"layout": result.layout.to_dict(), "metrics": report.to_dict(), "seed": seed})
            timing_ms = (time.perf_counter() - t0) * 1000.0
        finally:
            slots.release()
        return {"samples": samples, "timing_ms": timing_ms, "canvas_id": canvas_key}

    @app.post("/v1/generate/stream")
    def generate_stream(req: GenerateRequest):
        eng = need_engine()
        validate_generate(req)
        if req.num_samples != 1:
            raise HTTPException(400, "streaming serves exactly one sample per request")
        canvas, saliency, canvas_key = resolve_canvases(req)
        spec = _spec_from_elements(req.task, req.elements, eng.model.cfg.max_elements, eng.codec)
        cond = conditioning_for(canvas, saliency)
        seed = int(np.random.default_rng().integers(0, 2**31)) if req.seed is None else req.seed
        acquire_slot()

        def events() -> Iterator[str]:
            try:
                result = diffusion_sample(
                    eng.model, eng.sched, cond, spec, seed=seed, codec=eng.codec, record_trajectory=True
                )
                total = eng.sched.timesteps
                # one event per completed denoising step
                for i, state in enumerate(result.trajectory[1:], start=1):
                    payload = {
                        "t": total - i,
                        "layout": decode_layout_state(state, eng.codec).to_dict(),
                    }
                    yield f"data: {json.dumps(payload)}\n\n"
                report = evaluate_layout(result.layout, canvas, saliency)
                terminal = {
                    "final": True,
                    "layout": result.layout.to_dict(),
                    "metrics": report.to_dict(),
                    "seed": seed,
                    "canvas_id": canvas_key,
                }
                yield f"data: {json.dumps(terminal)}\n\n"
            finally:
                slots.release()

        return StreamingResponse(events(), media_type="text/event-stream")

    @app.post("/v1/refine")
    def refine_endpoint(req: RefineRequest):
        eng = need_engine()
        if not 0 < req.strength <= 1:
            raise HTTPException(400, "strength must lie in (0, 1]")
        canvas, saliency, canvas_key = resolve_canvases(req)
        try:
            layout = Layout.from_dict(req.layout)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(400, f"bad layout payload: {exc}") from exc
        if len(layout) == 0:
            raise HTTPException(400, "refinement needs a non-empty layout")
        cond = conditioning_for(canvas, saliency)
        seed = int(np.random.default_rng().integers(0, 2**31)) if req.seed is None else req.seed
        acquire_slot()
        try:
            t0 = time.perf_counter()
            result = diffusion_refine(
                eng.model, eng.sched, cond, layout,
                strength=req.strength, seed=seed, codec=eng.codec, record_trajectory=False,
            )
            report = evaluate_layout(result.layout, canvas, saliency)
            timing_ms = (time.perf_counter() - t0) * 1000.0
        finally:
            slots.release()
        return {
            "samples": [{"layout": result.layout.to_dict(), "metrics": report.to_dict(), "seed": seed}],
            "timing_ms": timing_ms,
            "canvas_id": canvas_key,
        }

    @app.post("/v1/evaluate")
    def evaluate_endpoint(req: EvaluateRequest):
        need_engine()
        canvas, saliency, _ = resolve_canvases(req)
        try:
            layout = Layout.from_dict(req.layout)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(400, f"bad layout payload: {exc}") from exc
        return evaluate_layout(layout, canvas, saliency).to_dict()

    return app
