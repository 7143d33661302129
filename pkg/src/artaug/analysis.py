"""Per-pixel analysis maps: local entropy, gradient saliency, classical edges.

All three operations are pure and deterministic. Every map keeps the
dimensions of its source image; borders are handled by edge replication
throughout. The classical edge detector is the offline substitute for a
learned edge model served remotely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_ENTROPY_WINDOW = 9
DEFAULT_CANNY_LOW = 50.0
DEFAULT_CANNY_HIGH = 100.0
_CANNY_SIGMA = 1.4


@dataclass(frozen=True)
class ScalarMap:
    """Per-pixel float field aligned to an image."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("ScalarMap values must be 2-D")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel edge strengths normalized to [0, 1]."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("EdgeMap values must be 2-D")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("EdgeMap values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Integer luma: round(0.299 R + 0.587 G + 0.114 B), ties up.

    Computed in exact integer arithmetic so results are identical on
    every platform.
    """
    if image.size == 0:
        raise ValueError("empty image")
    if image.ndim == 2:
        return image.astype(np.uint8)
    rgb = image.astype(np.int64)
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return luma.astype(np.uint8)


def local_entropy(gray: np.ndarray, window: int = DEFAULT_ENTROPY_WINDOW) -> ScalarMap:
    """Shannon entropy (bits) of the 256-bin histogram in a centered window."""
    if window % 2 == 0 or window < 3:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    h, w = gray.shape
    if window > h or window > w:
        raise ValueError(f"window {window} larger than image {w}x{h}")
    return ScalarMap(_kernels.local_entropy(np.ascontiguousarray(gray, np.uint8), window))


def gradient_magnitude(gray: np.ndarray) -> ScalarMap:
    """Sobel 3x3 gradient magnitude with replicated borders."""
    h, w = gray.shape
    if h < 3 or w < 3:
        raise ValueError(f"image must be at least 3x3, got {w}x{h}")
    gx, gy = _sobel_xy(gray.astype(np.float64))
    return ScalarMap(np.sqrt(gx * gx + gy * gy))


def edge_map_classical(
    gray: np.ndarray,
    low: float = DEFAULT_CANNY_LOW,
    high: float = DEFAULT_CANNY_HIGH,
) -> EdgeMap:
    """Canny-style binary edges: Gaussian smooth (sigma 1.4), Sobel,
    non-maximum suppression, hysteresis. Output values are exactly 0.0
    or 1.0. Thresholds apply to the Sobel magnitude of the smoothed
    image (0..~1020 for 8-bit input)."""
    if not 0 <= low < high:
        raise ValueError(f"thresholds must satisfy 0 <= low < high, got {low}, {high}")
    smoothed = _gaussian_blur(gray.astype(np.float64), _CANNY_SIGMA)
    gx, gy = _sobel_xy(smoothed)
    mag = np.sqrt(gx * gx + gy * gy)
    nms = _kernels.canny_nms(mag, gx, gy)
    edges = _kernels.hysteresis(nms, mag, low, high)
    return EdgeMap(edges.astype(np.float64))


def _sobel_xy(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(gray, 1, mode="edge")
    tl, tc, tr = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    ml, mr = p[1:-1, :-2], p[1:-1, 2:]
    bl, bc, br = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl)
    gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr)
    return gx, gy


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    weights = _gaussian_kernel(sigma)
    radius = len(weights) // 2
    out = _correlate_axis(image, weights, radius, axis=1)
    return _correlate_axis(out, weights, radius, axis=0)


def _correlate_axis(image: np.ndarray, weights: np.ndarray, radius: int, axis: int) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(image, pad, mode="edge")
    out = np.zeros_like(image)
    n = image.shape[axis]
    for k, wk in enumerate(weights):
        if axis == 1:
            out += wk * padded[:, k : k + n]
        else:
            out += wk * padded[k : k + n, :]
    return out
