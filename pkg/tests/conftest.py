"""Shared fixtures: deterministic image/dataset builders.

Images are random-noise RGB so entropy and gradient maps are
non-degenerate; everything is seeded so fixture content is identical
across test runs and processes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from artaug import imgio
from artaug.dataset import Annotation, Category, Dataset, ImageRecord, Provenance


def make_image(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Noise image with some layered structure (blocks over noise)."""
    img = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    # a flat block and a gradient band give the maps regions of genuinely
    # different entropy/saliency instead of uniform noise
    bw, bh = width // 3, height // 3
    x0 = int(rng.integers(0, width - bw))
    y0 = int(rng.integers(0, height - bh))
    img[y0 : y0 + bh, x0 : x0 + bw] = rng.integers(0, 256, size=3, dtype=np.uint8)
    ramp = np.linspace(0, 255, width, dtype=np.uint8)
    img[: height // 4, :, 0] = ramp
    return img


def build_dataset(
    root: Path,
    images_spec: list[tuple[int, int, list[tuple[int, tuple[int, int, int, int]]]]],
    categories: list[tuple[int, str]],
    seed: int = 2024,
) -> tuple[Dataset, Path]:
    """Write PNGs under root/images and return the matching Dataset.

    images_spec: per image (width, height, [(category_id, bbox), ...]).
    """
    image_root = root / "images"
    image_root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records: list[ImageRecord] = []
    annotations: list[Annotation] = []
    ann_id = 1
    for idx, (width, height, anns) in enumerate(images_spec, start=1):
        name = f"img_{idx:03d}.png"
        imgio.save_png(image_root / name, make_image(rng, width, height))
        records.append(ImageRecord(id=idx, file_name=name, width=width, height=height))
        for cat_id, bbox in anns:
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=idx,
                    category_id=cat_id,
                    bbox=bbox,
                    provenance=Provenance.real(),
                )
            )
            ann_id += 1
    cats = [Category(id=cid, name=name) for cid, name in categories]
    return Dataset(records, annotations, cats), image_root


SMALL_SPEC = [
    (64, 48, [(1, (5, 5, 20, 16)), (2, (30, 20, 24, 20))]),
    (72, 56, [(2, (10, 8, 28, 22))]),
    (48, 64, [(3, (6, 10, 18, 30)), (1, (28, 40, 14, 18))]),
]

SMALL_CATEGORIES = [(1, "rose"), (2, "lobster"), (3, "jug")]


@pytest.fixture
def small_dataset(tmp_path):
    """3 images, 5 annotations, 3 categories; rebuilt per test."""
    return build_dataset(tmp_path, SMALL_SPEC, SMALL_CATEGORIES)


def _fixture20_spec():
    sizes = [
        (64, 48), (72, 56), (48, 64), (96, 64), (56, 40),
        (80, 60), (64, 64), (72, 48), (60, 52), (88, 56),
        (64, 48), (72, 56), (48, 64), (96, 64), (56, 40),
        (80, 60), (64, 64), (72, 48), (60, 52), (88, 56),
    ]
    rng = np.random.default_rng(77)
    spec = []
    for i, (w, h) in enumerate(sizes):
        n_anns = 1 + (i % 3)  # 1..3 annotations
        anns = []
        for k in range(n_anns):
            bw = int(rng.integers(8, max(9, w // 3)))
            bh = int(rng.integers(8, max(9, h // 3)))
            x = int(rng.integers(0, w - bw))
            y = int(rng.integers(0, h - bh))
            cat = 1 + ((i + k) % 3)
            anns.append((cat, (x, y, bw, bh)))
        spec.append((w, h, anns))
    return spec


@pytest.fixture(scope="session")
def fixture20(tmp_path_factory):
    """20 images, 39 annotations, 3 categories; built once per session."""
    root = tmp_path_factory.mktemp("fixture20")
    return build_dataset(root, _fixture20_spec(), SMALL_CATEGORIES)
