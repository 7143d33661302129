"""COCO-format detection dataset: ingest, validation, split, stats.

The single source of truth for annotations flowing through the rest of
the toolkit. Datasets are validated on construction and treated as
immutable afterwards; every module that emits a dataset goes back
through this validation, so the bbox-in-bounds invariant holds
pipeline-wide.

Conventions:
- bboxes are integer pixels (x, y, w, h), top-left origin, rounded on
  ingest; out-of-bounds boxes are clamped with a logged warning.
- image/annotation/category lists are normalized to id order, so a
  load -> save -> load round trip is structurally exact.
- splits are image-level and derived from a keyed hash of the seed and
  image id, which keeps them stable across platforms and library
  versions and independent of input ordering.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .boxes import Box, clamp_box

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for malformed documents or invariant violations."""


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class Provenance:
    """Where an annotation came from: real data or a named synthetic run."""

    kind: str  # "real" | "synthetic"
    strategy: str | None = None
    seed: int | None = None

    REAL_KIND = "real"
    SYNTHETIC_KIND = "synthetic"

    @classmethod
    def real(cls) -> "Provenance":
        return cls(cls.REAL_KIND)

    @classmethod
    def synthetic(cls, strategy: str, seed: int) -> "Provenance":
        return cls(cls.SYNTHETIC_KIND, strategy, seed)

    def to_json(self) -> dict:
        if self.kind == self.REAL_KIND:
            return {"kind": self.kind}
        return {"kind": self.kind, "strategy": self.strategy, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict | None) -> "Provenance":
        if obj is None:
            return cls.real()
        kind = obj.get("kind", cls.REAL_KIND)
        if kind == cls.REAL_KIND:
            return cls.real()
        if kind == cls.SYNTHETIC_KIND:
            return cls.synthetic(str(obj.get("strategy")), int(obj.get("seed", 0)))
        raise DatasetError(f"unknown provenance kind {kind!r}")


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: Box
    provenance: Provenance = field(default_factory=Provenance.real)

    def __post_init__(self):
        if not isinstance(self.bbox, Box):
            if len(self.bbox) != 4:
                raise DatasetError(
                    f"annotation {self.id}: bbox must have 4 entries, got {self.bbox!r}"
                )
            object.__setattr__(self, "bbox", Box(*(int(v) for v in self.bbox)))


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise DatasetError(f"val_fraction must be in (0,1), got {self.val_fraction}")


class Dataset:
    """Validated, immutable collection of images, annotations, categories."""

    def __init__(
        self,
        images: list[ImageRecord] | tuple[ImageRecord, ...],
        annotations: list[Annotation] | tuple[Annotation, ...],
        categories: list[Category] | tuple[Category, ...],
    ):
        self.images = tuple(sorted(images, key=lambda r: r.id))
        self.annotations = tuple(sorted(annotations, key=lambda a: a.id))
        self.categories = tuple(sorted(categories, key=lambda c: c.id))
        self._validate()
        self._img_by_id = {im.id: im for im in self.images}
        self._cat_by_id = {c.id: c for c in self.categories}
        self._anns_by_image: dict[int, list[Annotation]] = {im.id: [] for im in self.images}
        for ann in self.annotations:
            self._anns_by_image[ann.image_id].append(ann)

    def _validate(self) -> None:
        for name, items in (
            ("image", self.images),
            ("annotation", self.annotations),
            ("category", self.categories),
        ):
            ids = [it.id for it in items]
            if len(ids) != len(set(ids)):
                raise DatasetError(f"duplicate {name} ids")
        for cat in self.categories:
            if not cat.name:
                raise DatasetError(f"category {cat.id} has an empty name")
        for im in self.images:
            if im.width <= 0 or im.height <= 0:
                raise DatasetError(f"image {im.id} has non-positive dimensions")
        image_ids = {im.id for im in self.images}
        cat_ids = {c.id for c in self.categories}
        img_dims = {im.id: (im.width, im.height) for im in self.images}
        for ann in self.annotations:
            if ann.image_id not in image_ids:
                raise DatasetError(f"annotation {ann.id}: dangling image reference {ann.image_id}")
            if ann.category_id not in cat_ids:
                raise DatasetError(
                    f"annotation {ann.id}: dangling category reference {ann.category_id}"
                )
            x, y, w, h = ann.bbox
            iw, ih = img_dims[ann.image_id]
            if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > iw or y + h > ih:
                raise DatasetError(
                    f"annotation {ann.id}: bbox {tuple(ann.bbox)} outside image {ann.image_id} "
                    f"bounds {iw}x{ih}"
                )

    def image(self, image_id: int) -> ImageRecord:
        return self._img_by_id[image_id]

    def category(self, category_id: int) -> Category:
        return self._cat_by_id[category_id]

    def annotations_for(self, image_id: int) -> list[Annotation]:
        return list(self._anns_by_image.get(image_id, ()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.images == other.images
            and self.annotations == other.annotations
            and self.categories == other.categories
        )

    def __repr__(self) -> str:
        return (
            f"Dataset(images={len(self.images)}, annotations={len(self.annotations)}, "
            f"categories={len(self.categories)})"
        )

    def to_coco(self) -> dict:
        return {
            "images": [
                {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
                for im in self.images
            ],
            "annotations": [
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "category_id": a.category_id,
                    "bbox": list(a.bbox),
                    "area": a.bbox.area,
                    "iscrowd": 0,
                    "provenance": a.provenance.to_json(),
                }
                for a in self.annotations
            ],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            json.dump(self.to_coco(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_dataset(path: str | Path, image_root: str | Path | None = None, strict: bool = False) -> Dataset:
    """Load and validate a COCO-style annotation document.

    Out-of-bounds bboxes are clamped to image bounds (real art datasets
    contain boundary noise); each clamp is logged. Boxes that are empty
    after clamping, dangling references, and duplicate ids are fatal.
    With ``strict`` set, every referenced image file must be readable.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot parse annotation document {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError(f"annotation document {path} is not an object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise DatasetError(f"annotation document missing {key!r} list")

    try:
        images = [
            ImageRecord(
                id=int(e["id"]),
                file_name=str(e["file_name"]),
                width=int(e["width"]),
                height=int(e["height"]),
            )
            for e in doc["images"]
        ]
        categories = [Category(id=int(e["id"]), name=str(e["name"])) for e in doc["categories"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed image/category entry: {exc}") from exc

    dims = {im.id: (im.width, im.height) for im in images}
    annotations = []
    clamped = 0
    for e in doc["annotations"]:
        try:
            ann_id = int(e["id"])
            image_id = int(e["image_id"])
            bx = [int(round(float(v))) for v in e["bbox"]]
            box = Box(*bx)
            ann = Annotation(
                id=ann_id,
                image_id=image_id,
                category_id=int(e["category_id"]),
                bbox=box,
                provenance=Provenance.from_json(e.get("provenance")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed annotation entry: {exc}") from exc
        if ann.image_id in dims:
            iw, ih = dims[ann.image_id]
            clipped = clamp_box(ann.bbox, iw, ih)
            if clipped != ann.bbox:
                if clipped.w <= 0 or clipped.h <= 0:
                    raise DatasetError(
                        f"annotation {ann.id}: bbox {tuple(ann.bbox)} empty after clamping "
                        f"to image {ann.image_id} bounds {iw}x{ih}"
                    )
                logger.warning(
                    "annotation %d: bbox %s clamped to %s (image %d is %dx%d)",
                    ann.id, tuple(ann.bbox), tuple(clipped), ann.image_id, iw, ih,
                )
                clamped += 1
                ann = Annotation(ann.id, ann.image_id, ann.category_id, clipped, ann.provenance)
        annotations.append(ann)
    if clamped:
        logger.warning("%d bbox(es) clamped to image bounds on ingest", clamped)

    dataset = Dataset(images, annotations, categories)

    if strict:
        if image_root is None:
            raise DatasetError("strict ingest requires an image root")
        root = Path(image_root)
        for im in dataset.images:
            file = root / im.file_name
            try:
                with Image.open(file) as handle:
                    handle.verify()
            except (OSError, SyntaxError) as exc:
                raise DatasetError(f"unreadable image file {file}: {exc}") from exc
    return dataset


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Image-level train/val partition, deterministic given the seed.

    Images are ranked by a keyed BLAKE2b hash of (seed, image id) and
    the first round(val_fraction * n) become the validation set;
    annotations follow their image.
    """
    n = len(dataset.images)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    val_count = int(math.floor(spec.val_fraction * n + 0.5))
    if val_count == 0 or val_count == n:
        raise DatasetError(
            f"val_fraction {spec.val_fraction} yields an empty split for {n} images"
        )
    key = (spec.seed & (2**64 - 1)).to_bytes(8, "big")
    ranked = sorted(
        dataset.images,
        key=lambda im: (_rank_digest(key, im.id), im.id),
    )
    val_ids = {im.id for im in ranked[:val_count]}
    return (
        _subset(dataset, {im.id for im in dataset.images} - val_ids),
        _subset(dataset, val_ids),
    )


def class_stats(dataset: Dataset) -> dict[int, int]:
    """Instance count per category id; zero-annotation categories included."""
    counts = {c.id: 0 for c in dataset.categories}
    for ann in dataset.annotations:
        counts[ann.category_id] += 1
    return counts


def _rank_digest(key: bytes, image_id: int) -> bytes:
    import hashlib

    return hashlib.blake2b(str(image_id).encode(), key=key, digest_size=16).digest()


def _subset(dataset: Dataset, image_ids: set[int]) -> Dataset:
    return Dataset(
        [im for im in dataset.images if im.id in image_ids],
        [a for a in dataset.annotations if a.image_id in image_ids],
        list(dataset.categories),
    )
