"""HTTP application exposing the image-generation wire protocol.

Endpoints
---------
``GET /health``
    200 ``{"status": "ok", "models_loaded": true}`` once the engine has
    loaded; 503 before that.  The service never reports healthy while its
    models are absent.
``POST /v1/inpaint``
    ``{image_b64, mask_b64, prompt, negative_prompt, seed, steps,
    guidance}`` → ``{image_b64}``.  Pixels outside the mask are preserved;
    output dimensions equal input dimensions.
``POST /v1/generate_edge_conditioned``
    ``{edge_map_b64, prompt, negative_prompt, seed, steps, guidance}`` →
    ``{image_b64}`` with the edge map's dimensions.
``POST /v1/edge_map``
    ``{image_b64}`` → ``{edge_map_b64}``; the returned 8-bit grayscale PNG
    encodes edge strengths in [0, 1].

Error mapping: malformed bodies, undecodable or oversized payloads,
mismatched mask dimensions, and empty prompts are 400; requests before the
models finish loading are 503; engine failures are 500.  Inference is
serialized through one lock per process — HTTP requests are accepted
concurrently but run the model one at a time.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import codecs
from .config import ServiceConfig
from .engine import build_engine


class InpaintRequest(BaseModel):
    image_b64: str
    mask_b64: str
    prompt: str
    negative_prompt: str = ""
    seed: int = 0
    steps: int = Field(default=30, ge=1, le=500)
    guidance: float = Field(default=7.5, ge=0.0)


class EdgeConditionedRequest(BaseModel):
    edge_map_b64: str
    prompt: str
    negative_prompt: str = ""
    seed: int = 0
    steps: int = Field(default=30, ge=1, le=500)
    guidance: float = Field(default=7.5, ge=0.0)


class EdgeMapRequest(BaseModel):
    image_b64: str


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    cfg = config or ServiceConfig()
    engine = build_engine(cfg)
    inference_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        engine.load()
        yield

    app = FastAPI(title="diffusion-service", version="0.1.0", lifespan=lifespan)
    app.state.config = cfg
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def _malformed_request(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        what = first.get("msg", "invalid request body")
        detail = f"malformed request: {where}: {what}" if where else f"malformed request: {what}"
        return JSONResponse(status_code=400, content={"detail": detail})

    def _require_ready() -> None:
        if not engine.loaded:
            raise HTTPException(status_code=503, detail="models are not loaded yet")

    def _decode(decoder, field: str, text: str) -> np.ndarray:
        try:
            return decoder(field, text, cfg.max_payload_bytes)
        except codecs.PayloadError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    def _infer(fn, /, *args, **kwargs):
        try:
            with inference_lock:
                return fn(*args, **kwargs)
        except Exception as exc:
            raise HTTPException(
                status_code=500, detail=f"inference failed: {exc}"
            ) from exc

    @app.get("/health")
    def health():
        if engine.loaded:
            return {"status": "ok", "models_loaded": True}
        return JSONResponse(
            status_code=503,
            content={"status": "loading", "models_loaded": False},
        )

    @app.post("/v1/inpaint")
    def inpaint(req: InpaintRequest):
        _require_ready()
        if not req.prompt:
            raise HTTPException(status_code=400, detail="prompt must not be empty")
        image = _decode(codecs.decode_image_b64, "image_b64", req.image_b64)
        mask = _decode(codecs.decode_mask_b64, "mask_b64", req.mask_b64)
        if mask.shape != image.shape[:2]:
            raise HTTPException(
                status_code=400,
                detail=(
                    f"mask is {mask.shape[1]}x{mask.shape[0]} but image is "
                    f"{image.shape[1]}x{image.shape[0]}"
                ),
            )
        out = _infer(
            engine.inpaint,
            image,
            mask,
            req.prompt,
            req.negative_prompt,
            req.seed,
            req.steps,
            req.guidance,
        )
        return {"image_b64": codecs.encode_image_b64(out)}

    @app.post("/v1/generate_edge_conditioned")
    def generate_edge_conditioned(req: EdgeConditionedRequest):
        _require_ready()
        if not req.prompt:
            raise HTTPException(status_code=400, detail="prompt must not be empty")
        edge_map = _decode(codecs.decode_edge_b64, "edge_map_b64", req.edge_map_b64)
        out = _infer(
            engine.generate_from_edges,
            edge_map,
            req.prompt,
            req.negative_prompt,
            req.seed,
            req.steps,
            req.guidance,
        )
        return {"image_b64": codecs.encode_image_b64(out)}

    @app.post("/v1/edge_map")
    def edge_map(req: EdgeMapRequest):
        _require_ready()
        image = _decode(codecs.decode_image_b64, "image_b64", req.image_b64)
        values = _infer(engine.edge_map, image)
        return {"edge_map_b64": codecs.encode_gray_b64(values)}

    return app
