"""Seeded procedural textures.

Value noise built on an integer-hashed lattice: every pixel is a pure
function of (seed, x, y), so tiles are reproducible across platforms
and independent of evaluation order. Used by the mock generation
backend to synthesize deterministic fill content.
"""

from __future__ import annotations

import numpy as np

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _hash_lattice(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """SplitMix64-style finalizer over packed lattice coordinates -> [0,1)."""
    h = (
        ix.astype(np.uint64) * _GOLDEN
        + iy.astype(np.uint64) * _MIX2
        + np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    )
    h ^= h >> np.uint64(30)
    h *= _MIX1
    h ^= h >> np.uint64(27)
    h *= _MIX2
    h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(width: int, height: int, seed: int, scale: int = 8) -> np.ndarray:
    """Smooth noise in [0,1), shape (height, width), float64.

    ``scale`` is the lattice cell size in pixels; larger means blobbier.
    Bilinear interpolation between hashed lattice corners with a
    smoothstep fade.
    """
    if width < 1 or height < 1:
        raise ValueError(f"size must be positive, got {width}x{height}")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    xs = np.arange(width, dtype=np.float64) / scale
    ys = np.arange(height, dtype=np.float64) / scale
    gx, gy = np.meshgrid(xs, ys)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx = gx - x0
    fy = gy - y0
    # smoothstep fade removes lattice-aligned creases
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    v00 = _hash_lattice(x0, y0, seed)
    v10 = _hash_lattice(x0 + 1, y0, seed)
    v01 = _hash_lattice(x0, y0 + 1, seed)
    v11 = _hash_lattice(x0 + 1, y0 + 1, seed)
    top = v00 + (v10 - v00) * fx
    bottom = v01 + (v11 - v01) * fx
    return top + (bottom - top) * fy


def tint_noise(noise: np.ndarray, rgb: tuple[float, float, float]) -> np.ndarray:
    """Modulate a base color by noise: c * (0.6 + 0.8 n), uint8 RGB."""
    out = np.empty((*noise.shape, 3), dtype=np.uint8)
    gain = 0.6 + 0.8 * noise
    for c in range(3):
        out[..., c] = np.clip(np.rint(rgb[c] * gain), 0, 255).astype(np.uint8)
    return out
