"""Base64/PNG wire codecs with payload-size enforcement."""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image


class PayloadError(Exception):
    """A request payload that must be rejected with HTTP 400."""


def _decode_bytes(field: str, text: str, max_bytes: int) -> bytes:
    if not isinstance(text, str) or not text:
        raise PayloadError(f"{field} must be a non-empty base64 string")
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise PayloadError(f"{field} is not valid base64: {exc}") from exc
    if len(raw) > max_bytes:
        raise PayloadError(
            f"{field} decodes to {len(raw)} bytes, over the {max_bytes} byte limit"
        )
    return raw


def _open_png(field: str, raw: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
        return img
    except Exception as exc:  # Pillow raises a zoo of types here
        raise PayloadError(f"{field} does not decode as an image: {exc}") from exc


def decode_image_b64(field: str, text: str, max_bytes: int) -> np.ndarray:
    """Decode a base64 PNG into an RGB uint8 array (H, W, 3)."""
    img = _open_png(field, _decode_bytes(field, text, max_bytes))
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def decode_mask_b64(field: str, text: str, max_bytes: int) -> np.ndarray:
    """Decode a base64 PNG into a boolean mask (H, W); >127 is masked."""
    img = _open_png(field, _decode_bytes(field, text, max_bytes))
    return np.asarray(img.convert("L"), dtype=np.uint8) > 127


def decode_edge_b64(field: str, text: str, max_bytes: int) -> np.ndarray:
    """Decode a base64 PNG into a float edge map in [0, 1] (H, W)."""
    img = _open_png(field, _decode_bytes(field, text, max_bytes))
    return np.asarray(img.convert("L"), dtype=np.uint8).astype(np.float64) / 255.0


def encode_image_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_gray_b64(values: np.ndarray) -> str:
    """Encode a float array in [0, 1] as an 8-bit grayscale PNG."""
    raster = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(raster, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
