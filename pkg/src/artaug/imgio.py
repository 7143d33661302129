"""Raster I/O helpers.

Rasters are numpy arrays: RGB images are uint8 (H, W, 3), grayscale
uint8 (H, W), masks bool (H, W). PNG encoding goes through Pillow with
no ancillary chunks, so identical pixels always produce identical bytes.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path: str | Path, image: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _to_pil(image).save(str(path), format="PNG")


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    _to_pil(image).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode in ("1", "L"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def mask_to_png_bytes(bits: np.ndarray) -> bytes:
    """Encode a boolean mask as a 1-bit PNG."""
    im = Image.fromarray(bits.astype(np.uint8) * 255, mode="L").convert("1")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def save_mask_png(path: str | Path, bits: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(mask_to_png_bytes(bits))


def png_bytes_to_mask(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L")) > 127


def save_gray_png(path: str | Path, values: np.ndarray, vmax: float | None = None) -> None:
    """Save a float map as 8-bit grayscale, scaled to [0, vmax]."""
    if vmax is None:
        vmax = float(values.max()) or 1.0
    scaled = np.clip(values / vmax, 0.0, 1.0)
    save_png(path, np.round(scaled * 255.0).astype(np.uint8))


def _to_pil(image: np.ndarray) -> Image.Image:
    if image.dtype == bool:
        return Image.fromarray(image.astype(np.uint8) * 255, mode="L")
    if image.ndim == 2:
        return Image.fromarray(image.astype(np.uint8), mode="L")
    return Image.fromarray(image.astype(np.uint8), mode="RGB")
