"""Inference engines.

Two implementations sit behind one interface:

* ``ProceduralEngine`` — deterministic, CPU-only image synthesis.  It keeps
  the service fully functional (and its contract testable) on machines
  without a GPU or model weights.  Every output is a pure function of the
  request payload, so identical requests return identical bytes.
* ``DiffusersEngine`` — loads real diffusion pipelines through the
  ``diffusers`` library.  The heavy imports happen inside ``load()`` so the
  package imports cleanly when those extras are absent.

Engines are selected by :class:`~diffusion_service.config.ServiceConfig`.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

from .config import ServiceConfig


class EngineError(Exception):
    """Inference failed after the request was accepted (HTTP 500)."""


class Engine(Protocol):
    def load(self) -> None: ...

    @property
    def loaded(self) -> bool: ...

    def inpaint(
        self,
        image: np.ndarray,
        mask: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray: ...

    def generate_from_edges(
        self,
        edge_map: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray: ...

    def edge_map(self, image: np.ndarray) -> np.ndarray: ...


def _rng_for(*parts: object) -> np.random.Generator:
    """Deterministic generator keyed by the request's semantic content."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _prompt_color(prompt: str) -> np.ndarray:
    """A stable RGB tint derived from the prompt text."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return np.array(list(digest[:3]), dtype=np.float64)


def _smooth_field(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Low-frequency noise in [0, 1] via bilinear upsampling of a coarse grid."""
    ch = max(2, height // 16 + 1)
    cw = max(2, width // 16 + 1)
    coarse = rng.random((ch, cw))
    ys = np.linspace(0.0, ch - 1.0, height)
    xs = np.linspace(0.0, cw - 1.0, width)
    y0 = np.minimum(ys.astype(np.intp), ch - 2)
    x0 = np.minimum(xs.astype(np.intp), cw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    tl = coarse[y0[:, None], x0[None, :]]
    tr = coarse[y0[:, None], x0[None, :] + 1]
    bl = coarse[y0[:, None] + 1, x0[None, :]]
    br = coarse[y0[:, None] + 1, x0[None, :] + 1]
    top = tl * (1.0 - fx) + tr * fx
    bot = bl * (1.0 - fx) + br * fx
    return top * (1.0 - fy) + bot * fy


def _sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a float image, edge-padded, same shape."""
    padded = np.pad(gray, 1, mode="edge")
    gx = (
        (padded[:-2, 2:] + 2.0 * padded[1:-1, 2:] + padded[2:, 2:])
        - (padded[:-2, :-2] + 2.0 * padded[1:-1, :-2] + padded[2:, :-2])
    )
    gy = (
        (padded[2:, :-2] + 2.0 * padded[2:, 1:-1] + padded[2:, 2:])
        - (padded[:-2, :-2] + 2.0 * padded[:-2, 1:-1] + padded[:-2, 2:])
    )
    return np.hypot(gx, gy)


class ProceduralEngine:
    """Deterministic stand-in generator; no model weights required."""

    def __init__(self, config: ServiceConfig) -> None:
        self._config = config
        self._loaded = False

    def load(self) -> None:
        self._loaded = True

    @property
    def loaded(self) -> bool:
        return self._loaded

    def inpaint(
        self,
        image: np.ndarray,
        mask: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray:
        height, width = image.shape[:2]
        rng = _rng_for("inpaint", prompt, negative_prompt, seed, steps, guidance,
                       height, width)
        tint = _prompt_color(prompt)
        if mask.all():
            base = np.full(3, 127.0)
        else:
            base = image[~mask].reshape(-1, 3).mean(axis=0)
        fill = 0.55 * base + 0.45 * tint
        field = _smooth_field(rng, height, width)
        grain = rng.random((height, width, 3)) * 24.0 - 12.0
        synth = fill[None, None, :] + (field[:, :, None] - 0.5) * 70.0 + grain
        out = image.copy()
        out[mask] = np.clip(np.rint(synth), 0, 255).astype(np.uint8)[mask]
        return out

    def generate_from_edges(
        self,
        edge_map: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray:
        height, width = edge_map.shape
        rng = _rng_for("edges", prompt, negative_prompt, seed, steps, guidance,
                       height, width)
        tint = _prompt_color(prompt)
        field = _smooth_field(rng, height, width)
        grain = rng.random((height, width, 3)) * 20.0 - 10.0
        canvas = (
            tint[None, None, :] * (0.6 + 0.4 * field[:, :, None])
            + edge_map[:, :, None] * 90.0
            + grain
        )
        return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)

    def edge_map(self, image: np.ndarray) -> np.ndarray:
        gray = image.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
        mag = _sobel_magnitude(gray)
        peak = mag.max()
        if peak <= 0.0:
            return np.zeros_like(mag)
        return mag / peak


class DiffusersEngine:
    """Real diffusion pipelines; imports its heavy dependencies at load time."""

    def __init__(self, config: ServiceConfig) -> None:
        self._config = config
        self._loaded = False
        self._inpaint_pipe = None
        self._edge_pipe = None
        self._detector = None
        self._torch = None

    def load(self) -> None:
        try:
            import torch
            from controlnet_aux import CannyDetector
            from diffusers import (
                AutoPipelineForInpainting,
                ControlNetModel,
                StableDiffusionControlNetPipeline,
            )
        except ImportError as exc:
            raise RuntimeError(
                "the 'diffusers' engine needs the optional model dependencies; "
                "install the service with the [diffusers] extra"
            ) from exc

        cfg = self._config
        self._torch = torch
        self._inpaint_pipe = AutoPipelineForInpainting.from_pretrained(
            cfg.inpaint_model
        ).to(cfg.device)
        controlnet = ControlNetModel.from_pretrained(
            cfg.conditioning_weights or cfg.edge_conditioned_model
        )
        self._edge_pipe = StableDiffusionControlNetPipeline.from_pretrained(
            cfg.edge_conditioned_model, controlnet=controlnet
        ).to(cfg.device)
        self._detector = CannyDetector()
        self._loaded = True

    @property
    def loaded(self) -> bool:
        return self._loaded

    def _generator(self, seed: int):
        return self._torch.Generator(device=self._config.device).manual_seed(seed)

    def inpaint(
        self,
        image: np.ndarray,
        mask: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray:
        from PIL import Image

        height, width = image.shape[:2]
        result = self._inpaint_pipe(
            prompt=prompt,
            negative_prompt=negative_prompt or None,
            image=Image.fromarray(image),
            mask_image=Image.fromarray(mask.astype(np.uint8) * 255),
            num_inference_steps=steps,
            guidance_scale=guidance,
            generator=self._generator(seed),
            width=width,
            height=height,
        ).images[0]
        out = np.asarray(result.convert("RGB"), dtype=np.uint8)
        if out.shape[:2] != (height, width):
            from PIL import Image as PILImage

            out = np.asarray(
                PILImage.fromarray(out).resize((width, height)), dtype=np.uint8
            )
        out[~mask] = image[~mask]
        return out

    def generate_from_edges(
        self,
        edge_map: np.ndarray,
        prompt: str,
        negative_prompt: str,
        seed: int,
        steps: int,
        guidance: float,
    ) -> np.ndarray:
        from PIL import Image

        height, width = edge_map.shape
        control = np.clip(np.rint(edge_map * 255.0), 0, 255).astype(np.uint8)
        control_rgb = np.repeat(control[:, :, None], 3, axis=2)
        result = self._edge_pipe(
            prompt=prompt,
            negative_prompt=negative_prompt or None,
            image=Image.fromarray(control_rgb),
            num_inference_steps=steps,
            guidance_scale=guidance,
            generator=self._generator(seed),
            width=width,
            height=height,
        ).images[0]
        out = np.asarray(result.convert("RGB"), dtype=np.uint8)
        if out.shape[:2] != (height, width):
            out = np.asarray(
                Image.fromarray(out).resize((width, height)), dtype=np.uint8
            )
        return out

    def edge_map(self, image: np.ndarray) -> np.ndarray:
        from PIL import Image

        detected = self._detector(Image.fromarray(image))
        gray = np.asarray(detected.convert("L"), dtype=np.uint8)
        if gray.shape != image.shape[:2]:
            gray = np.asarray(
                Image.fromarray(gray).resize((image.shape[1], image.shape[0])),
                dtype=np.uint8,
            )
        return gray.astype(np.float64) / 255.0


def build_engine(config: ServiceConfig) -> Engine:
    if config.engine == "procedural":
        return ProceduralEngine(config)
    if config.engine == "diffusers":
        return DiffusersEngine(config)
    raise ValueError(f"unknown engine {config.engine!r}")
