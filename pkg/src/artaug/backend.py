"""Generation backends: a deterministic in-process mock and a remote HTTP client.

Both expose the same three operations — masked inpainting, edge-conditioned
generation, and edge-map extraction — behind one request/result pair, so the
pipeline never knows which is wired in.

The mock synthesizes seeded value-noise textures: fast, CPU-only, and
bit-reproducible, which is what the test suite needs. The remote client
speaks base64-PNG-over-JSON to an inference service and adds retry,
backoff, and an in-flight cap.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import imgio
from .analysis import EdgeMap, edge_map_classical, to_grayscale
from .masks import Mask
from .texture import tint_noise, value_noise

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 30
DEFAULT_GUIDANCE = 7.5

_BACKOFF_BASE_S = 0.5
_BACKOFF_FACTOR = 2.0


class BackendError(RuntimeError):
    """Generation failed; carries the request identity for resume."""

    def __init__(self, message: str, request_id: str = ""):
        super().__init__(message)
        self.request_id = request_id


class RequestKind(str, Enum):
    INPAINT = "inpaint"
    EDGE_CONDITIONED = "edge_conditioned"


@dataclass(frozen=True)
class GenerationRequest:
    kind: RequestKind
    prompt: str
    negative_prompt: str = ""
    seed: int = 0
    steps: int = DEFAULT_STEPS
    guidance: float = DEFAULT_GUIDANCE
    image: np.ndarray | None = field(default=None, repr=False)
    mask: Mask | None = field(default=None, repr=False)
    edge_map: EdgeMap | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.guidance <= 0:
            raise ValueError(f"guidance must be > 0, got {self.guidance}")
        if self.kind is RequestKind.INPAINT:
            if self.image is None or self.mask is None:
                raise ValueError("inpaint request requires image and mask")
            if self.edge_map is not None:
                raise ValueError("inpaint request must not carry an edge map")
            if self.mask.bits.shape != self.image.shape[:2]:
                raise ValueError(
                    f"mask {self.mask.bits.shape} does not match image {self.image.shape[:2]}"
                )
        else:
            if self.edge_map is None:
                raise ValueError("edge-conditioned request requires an edge map")
            if self.image is not None or self.mask is not None:
                raise ValueError("edge-conditioned request carries only an edge map")

    @classmethod
    def for_inpaint(cls, image, mask, prompt, negative_prompt="", seed=0, **kw):
        return cls(
            RequestKind.INPAINT,
            prompt,
            negative_prompt,
            seed,
            image=image,
            mask=mask,
            **kw,
        )

    @classmethod
    def for_edges(cls, edge_map, prompt, negative_prompt="", seed=0, **kw):
        return cls(
            RequestKind.EDGE_CONDITIONED,
            prompt,
            negative_prompt,
            seed,
            edge_map=edge_map,
            **kw,
        )

    def digest(self) -> str:
        """Content address of this request: equal requests, equal digest."""
        h = hashlib.blake2b(digest_size=16)
        h.update(self.kind.value.encode())
        h.update(self.prompt.encode())
        h.update(b"\x1f")
        h.update(self.negative_prompt.encode())
        h.update(str((self.seed, self.steps, self.guidance)).encode())
        if self.image is not None:
            h.update(str(self.image.shape).encode())
            h.update(np.ascontiguousarray(self.image).tobytes())
        if self.mask is not None:
            h.update(np.ascontiguousarray(self.mask.bits).tobytes())
        if self.edge_map is not None:
            h.update(str(self.edge_map.values.shape).encode())
            h.update(np.ascontiguousarray(self.edge_map.values).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class GenerationResult:
    image: np.ndarray = field(repr=False)
    backend_id: str = "mock"
    latency_ms: float = 0.0


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "mock" or "remote"
    base_url: str = ""
    timeout: float = 120.0
    max_retries: int = 3
    max_in_flight: int = 2

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"backend kind must be 'mock' or 'remote', got {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("remote backend requires a base_url")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")


def _require_rgb(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {image.shape} {image.dtype}")
    return image


def _noise_seed(req: GenerationRequest) -> int:
    """Texture seed mixing the user seed with the conditioning text."""
    h = hashlib.blake2b(digest_size=8)
    h.update(req.kind.value.encode())
    h.update(str(req.seed).encode())
    h.update(req.prompt.encode())
    return int.from_bytes(h.digest(), "big")


class MockBackend:
    """Pure, seeded, lock-free stand-in for the diffusion service."""

    backend_id = "mock"

    def inpaint(self, req: GenerationRequest) -> GenerationResult:
        if req.kind is not RequestKind.INPAINT:
            raise ValueError("inpaint requires an inpaint request")
        t0 = time.perf_counter()
        image = _require_rgb(req.image)
        bits = req.mask.bits
        out = image.copy()
        if bits.any():
            unmasked = image[~bits]
            if unmasked.size:
                tint = tuple(float(c) for c in unmasked.mean(axis=0))
            else:
                tint = (128.0, 128.0, 128.0)
            h, w = bits.shape
            noise = value_noise(w, h, _noise_seed(req))
            texture = tint_noise(noise, tint)
            out[bits] = texture[bits]
        latency = (time.perf_counter() - t0) * 1000.0
        return GenerationResult(out, self.backend_id, latency)

    def generate_from_edges(self, req: GenerationRequest) -> GenerationResult:
        if req.kind is not RequestKind.EDGE_CONDITIONED:
            raise ValueError("generate_from_edges requires an edge-conditioned request")
        t0 = time.perf_counter()
        edges = req.edge_map.values
        h, w = edges.shape
        noise = value_noise(w, h, _noise_seed(req))
        # base color chosen by prompt hash so different classes get
        # different tints; edge pixels become bright ridges that a
        # gradient probe can find
        ph = hashlib.blake2b(req.prompt.encode(), digest_size=3).digest()
        out = np.empty((h, w, 3), dtype=np.uint8)
        for c in range(3):
            base = 90.0 + 60.0 * ph[c] / 255.0
            plane = base + 18.0 * (noise - 0.5) + 70.0 * edges
            out[..., c] = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
        latency = (time.perf_counter() - t0) * 1000.0
        return GenerationResult(out, self.backend_id, latency)

    def extract_edges(self, image: np.ndarray) -> EdgeMap:
        if image.size == 0:
            raise ValueError("cannot extract edges from an empty image")
        gray = to_grayscale(image) if image.ndim == 3 else image
        return edge_map_classical(gray)

    def health(self) -> bool:
        return True


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class RemoteBackend:
    """HTTP client for the inference service.

    Retries transport errors and 5xx responses with exponential backoff
    (base 500 ms, factor 2, jitter); 4xx responses fail immediately.
    A semaphore caps simultaneous in-flight requests.
    """

    def __init__(self, cfg: BackendConfig, session=None):
        if cfg.kind != "remote":
            raise ValueError("RemoteBackend requires a remote BackendConfig")
        import requests  # deferred so the mock path never needs it

        self.cfg = cfg
        self.base_url = cfg.base_url.rstrip("/")
        self.backend_id = f"remote:{self.base_url}"
        self._session = session if session is not None else requests.Session()
        self._gate = threading.BoundedSemaphore(cfg.max_in_flight)

    def _post(self, path: str, payload: dict, request_id: str) -> dict:
        import requests

        url = f"{self.base_url}{path}"
        attempts = self.cfg.max_retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                delay = _BACKOFF_BASE_S * _BACKOFF_FACTOR ** (attempt - 1)
                delay += random.uniform(0.0, delay / 2.0)
                logger.warning(
                    "retrying %s (%s) in %.2fs: %s", path, request_id, delay, last_error
                )
                time.sleep(delay)
            with self._gate:
                try:
                    resp = self._session.post(url, json=payload, timeout=self.cfg.timeout)
                except requests.RequestException as exc:
                    last_error = str(exc)
                    continue
            if resp.status_code == 200:
                return resp.json()
            body = resp.text[:200]
            if 400 <= resp.status_code < 500:
                raise BackendError(
                    f"{path} rejected ({resp.status_code}): {body}", request_id
                )
            last_error = f"HTTP {resp.status_code}: {body}"
        raise BackendError(
            f"{path} failed after {attempts} attempts: {last_error}", request_id
        )

    @staticmethod
    def _common_fields(req: GenerationRequest) -> dict:
        return {
            "prompt": req.prompt,
            "negative_prompt": req.negative_prompt,
            "seed": req.seed,
            "steps": req.steps,
            "guidance": req.guidance,
        }

    def _decode_image(self, data: dict, expect_hw: tuple[int, int], request_id: str) -> np.ndarray:
        image = imgio.decode_png(_unb64(data["image_b64"]))
        if image.shape[:2] != expect_hw:
            raise BackendError(
                f"service returned {image.shape[:2]}, expected {expect_hw}", request_id
            )
        return image

    def inpaint(self, req: GenerationRequest) -> GenerationResult:
        if req.kind is not RequestKind.INPAINT:
            raise ValueError("inpaint requires an inpaint request")
        request_id = req.digest()
        payload = {
            "image_b64": _b64(imgio.encode_png(req.image)),
            "mask_b64": _b64(imgio.mask_to_png_bytes(req.mask.bits)),
            **self._common_fields(req),
        }
        t0 = time.perf_counter()
        data = self._post("/v1/inpaint", payload, request_id)
        image = self._decode_image(data, req.image.shape[:2], request_id)
        return GenerationResult(image, self.backend_id, (time.perf_counter() - t0) * 1000.0)

    def generate_from_edges(self, req: GenerationRequest) -> GenerationResult:
        if req.kind is not RequestKind.EDGE_CONDITIONED:
            raise ValueError("generate_from_edges requires an edge-conditioned request")
        request_id = req.digest()
        edge_png = imgio.encode_png(
            np.clip(np.rint(req.edge_map.values * 255.0), 0, 255).astype(np.uint8)
        )
        payload = {"edge_map_b64": _b64(edge_png), **self._common_fields(req)}
        t0 = time.perf_counter()
        data = self._post("/v1/generate_edge_conditioned", payload, request_id)
        h, w = req.edge_map.values.shape
        image = self._decode_image(data, (h, w), request_id)
        return GenerationResult(image, self.backend_id, (time.perf_counter() - t0) * 1000.0)

    def extract_edges(self, image: np.ndarray) -> EdgeMap:
        if image.size == 0:
            raise ValueError("cannot extract edges from an empty image")
        request_id = hashlib.blake2b(
            np.ascontiguousarray(image).tobytes(), digest_size=16
        ).hexdigest()
        payload = {"image_b64": _b64(imgio.encode_png(image))}
        data = self._post("/v1/edge_map", payload, request_id)
        raster = imgio.decode_png(_unb64(data["edge_map_b64"]))
        if raster.ndim == 3:
            raster = raster[..., 0]
        if raster.shape != image.shape[:2]:
            raise BackendError(
                f"edge map {raster.shape} does not match image {image.shape[:2]}", request_id
            )
        return EdgeMap(raster.astype(np.float64) / 255.0)

    def health(self) -> bool:
        import requests

        try:
            resp = self._session.get(f"{self.base_url}/health", timeout=self.cfg.timeout)
        except requests.RequestException:
            return False
        return resp.status_code == 200


def make_backend(cfg: BackendConfig):
    if cfg.kind == "mock":
        return MockBackend()
    return RemoteBackend(cfg)
