"""Pure numpy/scipy implementations of the per-pixel kernels.

These mirror the compiled Cython kernels in ``_core`` operation for
operation. Floating point expressions are written with the same term
grouping as the C loops so both backends produce matching values, and
the integer/boolean kernels agree exactly.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int32)
_EIGHT_CONN = np.ones((3, 3), dtype=np.int32)

# tan(pi/8); the vertical sector test reuses it as ax <= t * ay
_TAN_PI_8 = 0.41421356237309503


def local_entropy(gray: np.ndarray, window: int) -> np.ndarray:
    """Shannon entropy (bits) of the 256-bin histogram in a centered window.

    Borders are handled by edge replication. Counts come from per-bin
    integral images, so they are exact.
    """
    pad = window // 2
    padded = np.pad(gray, pad, mode="edge")
    h, w = gray.shape
    n = float(window * window)
    ent = np.zeros((h, w), dtype=np.float64)
    for level in np.unique(padded):
        ind = (padded == level).astype(np.int64)
        ii = np.pad(ind.cumsum(axis=0).cumsum(axis=1), ((1, 0), (1, 0)))
        counts = (
            ii[window:, window:]
            - ii[:-window, window:]
            - ii[window:, :-window]
            + ii[:-window, :-window]
        )
        nz = counts > 0
        p = counts[nz] / n
        ent[nz] -= p * np.log2(p)
    return ent


def canny_nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Non-maximum suppression along the quantized gradient direction.

    The gradient direction is binned into 4 sectors by comparing |gy|
    against tan(pi/8)*|gx| (and symmetrically), avoiding atan2. Plateaus
    are broken deterministically: a pixel survives when it is strictly
    greater than its negative-side neighbor and >= its positive-side
    neighbor (negative side = smaller x, or smaller y for the vertical
    sector). The outer 1-pixel ring is always suppressed.
    """
    h, w = mag.shape
    keep = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return keep

    c = mag[1:-1, 1:-1]
    cgx = gx[1:-1, 1:-1]
    cgy = gy[1:-1, 1:-1]
    ax = np.abs(cgx)
    ay = np.abs(cgy)

    horiz = ay <= _TAN_PI_8 * ax
    vert = ax <= _TAN_PI_8 * ay
    diag = ~(horiz | vert)
    diag_pos = diag & (cgx * cgy > 0.0)
    diag_neg = diag & ~diag_pos

    left = mag[1:-1, :-2]
    right = mag[1:-1, 2:]
    up = mag[:-2, 1:-1]
    down = mag[2:, 1:-1]
    ul = mag[:-2, :-2]
    ur = mag[:-2, 2:]
    dl = mag[2:, :-2]
    dr = mag[2:, 2:]

    res = horiz & (c > left) & (c >= right)
    res |= vert & (c > up) & (c >= down)
    # +45 deg gradient axis: neighbors (x-1,y-1) and (x+1,y+1)
    res |= diag_pos & (c > ul) & (c >= dr)
    # -45 deg gradient axis: neighbors (x-1,y+1) and (x+1,y-1)
    res |= diag_neg & (c > dl) & (c >= ur)
    keep[1:-1, 1:-1] = res & (c > 0.0)
    return keep


def hysteresis(nms: np.ndarray, mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep weak edge pixels only when 8-connected to a strong pixel."""
    weak = nms & (mag >= low)
    strong = nms & (mag >= high)
    if not strong.any():
        return np.zeros_like(nms)
    labels, count = ndimage.label(weak, structure=_EIGHT_CONN)
    if count == 0:
        return np.zeros_like(nms)
    kept = np.unique(labels[strong])
    kept = kept[kept > 0]
    return np.isin(labels, kept)


def largest_component_area(bits: np.ndarray) -> int:
    """Pixel count of the largest 4-connected component (0 for empty)."""
    labels, count = ndimage.label(bits, structure=_FOUR_CONN)
    if count == 0:
        return 0
    return int(np.bincount(labels.ravel())[1:].max())
