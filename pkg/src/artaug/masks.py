"""Masking strategies for inpainting.

Seven mask producers plus a contiguity diagnostic:

- ADAPT   rectangular high-entropy half of the bbox (contiguous by
          construction)
- ENT-H / ENT-L   per-bbox median threshold on local entropy
- SAL-H / SAL-L   same thresholding on gradient saliency
- OPBG    random background patches that never touch an annotation
- BORDER  ring around a bbox

The H/L pairs partition their bbox exactly (strict > vs <=), which the
tests lean on. Thresholding defaults to the per-bbox median; ``scope``
switches to the map-wide median.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .analysis import ScalarMap
from .boxes import Box, clamp_box
from .rng import DetRng

logger = logging.getLogger(__name__)


class Frame(str, Enum):
    IMAGE = "image"
    CROP = "crop"


class StrategyKind(str, Enum):
    ADAPT = "ADAPT"
    ENT_H = "ENT_H"
    ENT_L = "ENT_L"
    SAL_H = "SAL_H"
    SAL_L = "SAL_L"
    OPBG = "OPBG"
    BORDER = "BORDER"
    EDGE = "EDGE"

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")

    @classmethod
    def from_cli(cls, name: str) -> "StrategyKind":
        normalized = name.strip().upper().replace("-", "_")
        try:
            return cls[normalized]
        except KeyError:
            valid = ", ".join(k.cli_name for k in cls)
            raise ValueError(f"unknown strategy {name!r} (expected one of {valid})") from None


# strategies whose masks live in the object's crop frame
OBJECT_STRATEGIES = (
    StrategyKind.ADAPT,
    StrategyKind.ENT_H,
    StrategyKind.ENT_L,
    StrategyKind.SAL_H,
    StrategyKind.SAL_L,
)
# strategies whose masks are image-aligned
CONTEXT_STRATEGIES = (StrategyKind.OPBG, StrategyKind.BORDER)
INPAINT_STRATEGIES = OBJECT_STRATEGIES + CONTEXT_STRATEGIES


@dataclass(frozen=True)
class Mask:
    """Binary raster tied to an explicit frame (never anonymous)."""

    bits: np.ndarray = field(repr=False)
    frame: Frame = Frame.IMAGE
    bbox: Box | None = None

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != bool:
            raise ValueError("mask bits must be a 2-D bool array")
        if self.frame is Frame.CROP:
            if self.bbox is None:
                raise ValueError("crop-aligned mask requires its bbox")
            if self.bits.shape != (self.bbox.h, self.bbox.w):
                raise ValueError(
                    f"mask {self.bits.shape} does not match crop {self.bbox.h}x{self.bbox.w}"
                )
        elif self.bbox is not None:
            raise ValueError("image-aligned mask must not carry a bbox")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def area_fraction(self) -> float:
        return self.area / self.bits.size if self.bits.size else 0.0


@dataclass(frozen=True)
class OpbgConfig:
    coverage: float = 0.25
    patch_frac: tuple[float, float] = (0.05, 0.15)
    max_attempts: int = 200

    def __post_init__(self):
        if not 0.0 < self.coverage < 1.0:
            raise ValueError(f"coverage must be in (0,1), got {self.coverage}")
        lo, hi = self.patch_frac
        if not (0.0 < lo <= hi < 1.0):
            raise ValueError(f"patch_frac must satisfy 0 < min <= max < 1, got {self.patch_frac}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def _check_bbox(values: np.ndarray, bbox: Box) -> np.ndarray:
    h, w = values.shape
    if bbox.w < 2 or bbox.h < 2:
        raise ValueError(f"degenerate bbox {tuple(bbox)}")
    if bbox.x < 0 or bbox.y < 0 or bbox.x2 > w or bbox.y2 > h:
        raise ValueError(f"bbox {tuple(bbox)} outside map bounds {w}x{h}")
    return values[bbox.y : bbox.y2, bbox.x : bbox.x2]


def _threshold_mask(scalar: ScalarMap, bbox: Box, high: bool, scope: str) -> Mask:
    crop = _check_bbox(scalar.values, bbox)
    if scope == "bbox":
        threshold = float(np.median(crop))
    elif scope == "image":
        threshold = float(np.median(scalar.values))
    else:
        raise ValueError(f"scope must be 'bbox' or 'image', got {scope!r}")
    bits = crop > threshold if high else crop <= threshold
    return Mask(bits, Frame.CROP, bbox)


def mask_ent_h(entropy: ScalarMap, bbox: Box, scope: str = "bbox") -> Mask:
    """Mask pixels with entropy strictly above the median."""
    return _threshold_mask(entropy, bbox, high=True, scope=scope)


def mask_ent_l(entropy: ScalarMap, bbox: Box, scope: str = "bbox") -> Mask:
    """Mask pixels with entropy at or below the median (complement of ENT-H)."""
    return _threshold_mask(entropy, bbox, high=False, scope=scope)


def mask_sal_h(saliency: ScalarMap, bbox: Box, scope: str = "bbox") -> Mask:
    """Mask pixels with gradient saliency strictly above the median."""
    return _threshold_mask(saliency, bbox, high=True, scope=scope)


def mask_sal_l(saliency: ScalarMap, bbox: Box, scope: str = "bbox") -> Mask:
    """Mask pixels with gradient saliency at or below the median."""
    return _threshold_mask(saliency, bbox, high=False, scope=scope)


def mask_adapt(entropy: ScalarMap, bbox: Box) -> Mask:
    """Rectangular half of the bbox with maximal mean entropy.

    Candidates are the four axis-aligned halves (ceil(side/2) thick);
    ties break top > bottom > left > right. The result is one rectangle,
    so it is contiguous by construction.
    """
    crop = _check_bbox(entropy.values, bbox)
    h, w = crop.shape
    half_h = (h + 1) // 2
    half_w = (w + 1) // 2
    candidates = (
        ("top", (slice(0, half_h), slice(0, w))),
        ("bottom", (slice(h - half_h, h), slice(0, w))),
        ("left", (slice(0, h), slice(0, half_w))),
        ("right", (slice(0, h), slice(w - half_w, w))),
    )
    best_mean = -np.inf
    best_slices = None
    for _, slices in candidates:
        mean = float(crop[slices].mean())
        if mean > best_mean:
            best_mean = mean
            best_slices = slices
    bits = np.zeros((h, w), dtype=bool)
    bits[best_slices] = True
    return Mask(bits, Frame.CROP, bbox)


def mask_opbg(
    image_size: tuple[int, int],
    annotations: list[Box],
    cfg: OpbgConfig,
    seed: int,
) -> Mask:
    """Union of random background patches, none intersecting any bbox.

    Sampling stops once the masked area reaches coverage * background
    area (background = image minus the union of bboxes) or after
    max_attempts draws. Deterministic for a given seed.
    """
    width, height = image_size
    bits = np.zeros((height, width), dtype=bool)
    occupied = np.zeros((height, width), dtype=bool)
    for box in annotations:
        clipped = clamp_box(box, width, height)
        if clipped.w > 0 and clipped.h > 0:
            occupied[clipped.y : clipped.y2, clipped.x : clipped.x2] = True
    background_area = int(width * height - np.count_nonzero(occupied))
    if background_area == 0:
        logger.warning("OPBG: annotations cover the entire image, no background to mask")
        return Mask(bits, Frame.IMAGE)

    target = cfg.coverage * background_area
    side_base = min(width, height)
    lo, hi = cfg.patch_frac
    rng = DetRng(seed)
    masked = 0
    attempts = 0
    while masked < target and attempts < cfg.max_attempts:
        attempts += 1
        pw = max(1, int(round(rng.uniform(lo, hi) * side_base)))
        ph = max(1, int(round(rng.uniform(lo, hi) * side_base)))
        pw = min(pw, width)
        ph = min(ph, height)
        px = rng.randint(0, width - pw)
        py = rng.randint(0, height - ph)
        patch = Box(px, py, pw, ph)
        if any(patch.intersects(b) for b in annotations):
            continue
        region = bits[py : py + ph, px : px + pw]
        masked += int(region.size - np.count_nonzero(region))
        region[:] = True
    return Mask(bits, Frame.IMAGE)


def mask_border(bbox: Box, image_size: tuple[int, int], margin_frac: float = 0.1) -> Mask:
    """Image-aligned ring around a bbox: dilate by max(3px, margin_frac
    of the corresponding side), clip to the image, subtract the bbox."""
    if margin_frac <= 0:
        raise ValueError(f"margin_frac must be > 0, got {margin_frac}")
    if bbox.w < 1 or bbox.h < 1:
        raise ValueError(f"degenerate bbox {tuple(bbox)}")
    width, height = image_size
    mx = max(3, int(round(margin_frac * bbox.w)))
    my = max(3, int(round(margin_frac * bbox.h)))
    dilated = clamp_box(
        Box(bbox.x - mx, bbox.y - my, bbox.w + 2 * mx, bbox.h + 2 * my), width, height
    )
    inner = clamp_box(bbox, width, height)
    bits = np.zeros((height, width), dtype=bool)
    bits[dilated.y : dilated.y2, dilated.x : dilated.x2] = True
    bits[inner.y : inner.y2, inner.x : inner.x2] = False
    return Mask(bits, Frame.IMAGE)


def contiguity_ratio(mask: Mask) -> float:
    """Largest 4-connected component area over total masked area.

    Empty masks score 1.0 by convention. Low values flag the fragmented
    masks that inpainting models handle poorly.
    """
    total = mask.area
    if total == 0:
        return 1.0
    return _kernels.largest_component_area(mask.bits) / total


def build_object_mask(strategy: StrategyKind, scalar: ScalarMap, bbox: Box, scope: str = "bbox") -> Mask:
    """Dispatch for the crop-aligned strategies."""
    if strategy is StrategyKind.ADAPT:
        return mask_adapt(scalar, bbox)
    if strategy is StrategyKind.ENT_H or strategy is StrategyKind.SAL_H:
        return _threshold_mask(scalar, bbox, high=True, scope=scope)
    if strategy is StrategyKind.ENT_L or strategy is StrategyKind.SAL_L:
        return _threshold_mask(scalar, bbox, high=False, scope=scope)
    raise ValueError(f"{strategy} is not an object strategy")
