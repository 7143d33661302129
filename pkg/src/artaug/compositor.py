"""Compositing: feathered blend-back, canvas placement, and background fill.

``blend_crop`` re-inserts a generated patch into its source image with a
linear alpha ramp near the paste boundary, so replacements don't leave a
hard seam. ``place_on_canvas`` lays object crops onto a fresh neutral
canvas without overlap, emitting their annotations; ``context_fill``
then asks a backend to inpaint everything that is not an object.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .backend import GenerationRequest
from .boxes import Box
from .dataset import Annotation, Provenance
from .masks import Frame, Mask
from .rng import DetRng, derive_seed

logger = logging.getLogger(__name__)

CANVAS_RGB = (240, 240, 240)
DEFAULT_CANVAS_SIZE = (512, 512)

BACKGROUND_PROMPT = "oil painting background scene on canvas"
BACKGROUND_NEGATIVE = "bad anatomy, bad structure"


@dataclass(frozen=True)
class BlendSpec:
    feather_width: int = 0

    def __post_init__(self):
        if self.feather_width < 0:
            raise ValueError(f"feather_width must be >= 0, got {self.feather_width}")


@dataclass(frozen=True)
class PlacementSpec:
    canvas_size: tuple[int, int] = DEFAULT_CANVAS_SIZE
    max_object_frac: float = 0.7
    margin_frac: float = 0.05
    seed: int = 0

    def __post_init__(self):
        w, h = self.canvas_size
        if w < 1 or h < 1:
            raise ValueError(f"canvas size must be positive, got {self.canvas_size}")
        if not 0.0 < self.max_object_frac < 1.0:
            raise ValueError(f"max_object_frac must be in (0,1), got {self.max_object_frac}")
        if not 0.0 <= self.margin_frac < 0.5:
            raise ValueError(f"margin_frac must be in [0, 0.5), got {self.margin_frac}")


def feather_alpha(height: int, width: int, feather_width: int) -> np.ndarray:
    """Alpha plane for a paste of the given size.

    Distance-1 pixels (the outermost ring) get 1/f, ramping linearly to
    1 at distance f from the boundary; feather 0 means hard paste.
    """
    if feather_width <= 0:
        return np.ones((height, width), dtype=np.float64)
    rows = np.minimum(np.arange(height), np.arange(height)[::-1])
    cols = np.minimum(np.arange(width), np.arange(width)[::-1])
    dist = np.minimum(rows[:, None], cols[None, :]) + 1
    return np.minimum(1.0, dist / float(feather_width))


def blend_crop(base: np.ndarray, generated: np.ndarray, bbox: Box, spec: BlendSpec) -> np.ndarray:
    """Paste ``generated`` over ``base`` at ``bbox`` with a feathered edge.

    Pixels outside the bbox are copied bit-exactly; inside, each channel
    is the convex combination alpha*generated + (1-alpha)*base.
    """
    bh, bw = base.shape[:2]
    if bbox.x < 0 or bbox.y < 0 or bbox.x2 > bw or bbox.y2 > bh:
        raise ValueError(f"bbox {tuple(bbox)} outside base image {bw}x{bh}")
    if generated.shape[:2] != (bbox.h, bbox.w):
        raise ValueError(
            f"generated patch {generated.shape[:2]} does not match bbox {bbox.h}x{bbox.w}"
        )
    if spec.feather_width > min(bbox.w, bbox.h) / 2:
        raise ValueError(
            f"feather_width {spec.feather_width} exceeds half of min bbox side "
            f"{min(bbox.w, bbox.h)}"
        )
    out = base.copy()
    region = out[bbox.y : bbox.y2, bbox.x : bbox.x2].astype(np.float64)
    alpha = feather_alpha(bbox.h, bbox.w, spec.feather_width)[..., None]
    blended = alpha * generated.astype(np.float64) + (1.0 - alpha) * region
    out[bbox.y : bbox.y2, bbox.x : bbox.x2] = np.rint(blended).astype(base.dtype)
    return out


def _scaled_size(crop_w: int, crop_h: int, spec: PlacementSpec) -> tuple[int, int]:
    cw, ch = spec.canvas_size
    limit_w = spec.max_object_frac * cw
    limit_h = spec.max_object_frac * ch
    scale = min(1.0, limit_w / crop_w, limit_h / crop_h)
    return max(1, int(round(crop_w * scale))), max(1, int(round(crop_h * scale)))


@dataclass(frozen=True)
class PlacedCanvas:
    image: np.ndarray = field(repr=False)
    annotations: tuple[Annotation, ...]
    background_mask: Mask = field(repr=False)
    deferred: tuple[tuple[np.ndarray, int], ...] = ()
    deferred_indices: tuple[int, ...] = ()  # positions in the input crop list


def place_on_canvas(
    crops: list[tuple[np.ndarray, int]],
    spec: PlacementSpec,
    image_id: int = 0,
    first_annotation_id: int = 1,
) -> PlacedCanvas:
    """Place crops on one neutral canvas at seeded non-overlapping spots.

    Crops are scaled down (aspect preserved) so neither side exceeds
    max_object_frac of the canvas. A crop that cannot find a free spot
    in 50 attempts is returned in ``deferred`` for a fresh canvas rather
    than overlapped. Placement is deterministic in spec.seed.
    """
    canvas_w, canvas_h = spec.canvas_size
    canvas = np.empty((canvas_h, canvas_w, 3), dtype=np.uint8)
    canvas[:] = CANVAS_RGB
    margin_x = int(round(spec.margin_frac * canvas_w))
    margin_y = int(round(spec.margin_frac * canvas_h))

    placed: list[Box] = []
    annotations: list[Annotation] = []
    deferred: list[tuple[np.ndarray, int]] = []
    deferred_indices: list[int] = []
    next_id = first_annotation_id
    for index, (crop, category_id) in enumerate(crops):
        ch, cw = crop.shape[:2]
        if cw < 1 or ch < 1:
            raise ValueError("cannot place an empty crop")
        new_w, new_h = _scaled_size(cw, ch, spec)
        if new_w > canvas_w - 2 * margin_x or new_h > canvas_h - 2 * margin_y:
            raise ValueError(
                f"crop {cw}x{ch} does not fit canvas {canvas_w}x{canvas_h} "
                f"inside margin {margin_x},{margin_y}"
            )
        if (new_w, new_h) != (cw, ch):
            crop = np.asarray(
                Image.fromarray(crop).resize((new_w, new_h), Image.BILINEAR), dtype=np.uint8
            )
        rng = DetRng(derive_seed(spec.seed, "placement", index))
        spot = None
        for _ in range(50):
            x = rng.randint(margin_x, canvas_w - margin_x - new_w)
            y = rng.randint(margin_y, canvas_h - margin_y - new_h)
            candidate = Box(x, y, new_w, new_h)
            if not any(candidate.intersects(prev) for prev in placed):
                spot = candidate
                break
        if spot is None:
            deferred.append((crop, category_id))
            deferred_indices.append(index)
            continue
        canvas[spot.y : spot.y2, spot.x : spot.x2] = crop
        placed.append(spot)
        annotations.append(
            Annotation(
                id=next_id,
                image_id=image_id,
                category_id=category_id,
                bbox=spot,
                provenance=Provenance.synthetic("EDGE", spec.seed),
            )
        )
        next_id += 1

    bits = np.ones((canvas_h, canvas_w), dtype=bool)
    for box in placed:
        bits[box.y : box.y2, box.x : box.x2] = False
    return PlacedCanvas(
        canvas,
        tuple(annotations),
        Mask(bits, Frame.IMAGE),
        tuple(deferred),
        tuple(deferred_indices),
    )


def background_prompt(class_names: list[str]) -> str:
    names = sorted(set(n for n in class_names if n))
    if not names:
        return BACKGROUND_PROMPT
    return f"{BACKGROUND_PROMPT}, setting for {', '.join(names)}"


def context_fill(
    image: np.ndarray,
    background_mask: Mask,
    class_names: list[str],
    backend,
    seed: int = 0,
) -> np.ndarray:
    """Inpaint everything outside the placed objects.

    The mask covers only background, so object pixels survive untouched
    (bit-exactly under the mock backend). An empty mask is an identity.
    """
    if background_mask.frame is not Frame.IMAGE:
        raise ValueError("context_fill requires an image-aligned mask")
    if background_mask.bits.shape != image.shape[:2]:
        raise ValueError(
            f"mask {background_mask.bits.shape} does not match image {image.shape[:2]}"
        )
    if background_mask.area == 0:
        return image.copy()
    req = GenerationRequest.for_inpaint(
        image,
        background_mask,
        background_prompt(class_names),
        BACKGROUND_NEGATIVE,
        seed=seed,
    )
    return backend.inpaint(req).image
