"""End-to-end augmentation runs.

A run takes a validated dataset plus a RunConfig and produces an output
tree::

    out/
      run_config.json   reproducibility header (version, seed, config)
      images/           one PNG per produced image, content-addressed names
      annotations.json  COCO-shaped document for the augmented set
      report.txt        deterministic plain-text run report

Three run families: masked inpainting (object- or context-aligned
masks), whole-object edge-conditioned replacement, and class-balancing
canvas synthesis. All per-item randomness derives from
(global_seed, stable ids), so outputs are byte-identical across reruns
and independent of worker scheduling; existing output images are
never regenerated, which makes interrupted runs resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, imgio
from .analysis import EdgeMap, ScalarMap, gradient_magnitude, local_entropy, to_grayscale
from .backend import BackendConfig, BackendError, GenerationRequest, make_backend
from .balance import BalancePlan
from .boxes import Box, clamp_box
from .compositor import (
    BlendSpec,
    PlacementSpec,
    background_prompt,
    blend_crop,
    context_fill,
    place_on_canvas,
)
from .dataset import Annotation, Category, Dataset, ImageRecord, Provenance
from .masks import (
    CONTEXT_STRATEGIES,
    INPAINT_STRATEGIES,
    OBJECT_STRATEGIES,
    Frame,
    Mask,
    OpbgConfig,
    StrategyKind,
    build_object_mask,
    contiguity_ratio,
    mask_border,
    mask_opbg,
)
from .rng import derive_seed

logger = logging.getLogger(__name__)

POSITIVE_TEMPLATE = "oil painting of {class_name} on canvas"
NEGATIVE_PROMPT = "bad anatomy, bad structure"

# recorded into manifests for the downstream detector; not consumed here
TRAINING_LR = 0.001
TRAINING_LR_SECOND_STAGE = 0.0007

MANIFEST_SCHEMES = ("mixed", "aug_then_orig", "orig_then_aug")


@dataclass(frozen=True)
class PromptTemplate:
    positive: str = POSITIVE_TEMPLATE
    negative: str = NEGATIVE_PROMPT

    def __post_init__(self):
        if "{class_name}" not in self.positive:
            raise ValueError("positive template must contain {class_name}")


def prompt_for(category: Category, template: PromptTemplate = PromptTemplate()) -> tuple[str, str]:
    if not category.name:
        raise ValueError("category name must be non-empty")
    return template.positive.format(class_name=category.name), template.negative


@dataclass(frozen=True)
class RunConfig:
    strategy: StrategyKind
    global_seed: int
    backend: BackendConfig = BackendConfig()
    image_root: str = "."
    out_dir: str = "out"
    entropy_window: int = 9
    threshold_scope: str = "bbox"
    opbg: OpbgConfig = OpbgConfig()
    border_margin_frac: float = 0.1
    feather_frac: float = 0.05
    placement: PlacementSpec = PlacementSpec()
    pack: bool = False
    steps: int = 30
    guidance: float = 7.5
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not 0.0 <= self.feather_frac < 0.5:
            raise ValueError(f"feather_frac must be in [0, 0.5), got {self.feather_frac}")
        if self.border_margin_frac <= 0:
            raise ValueError("border_margin_frac must be > 0")

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy.cli_name,
            "global_seed": self.global_seed,
            "backend": {
                "kind": self.backend.kind,
                "base_url": self.backend.base_url,
                "timeout": self.backend.timeout,
                "max_retries": self.backend.max_retries,
                "max_in_flight": self.backend.max_in_flight,
            },
            "image_root": str(self.image_root),
            "out_dir": str(self.out_dir),
            "entropy_window": self.entropy_window,
            "threshold_scope": self.threshold_scope,
            "opbg": {
                "coverage": self.opbg.coverage,
                "patch_frac": list(self.opbg.patch_frac),
                "max_attempts": self.opbg.max_attempts,
            },
            "border_margin_frac": self.border_margin_frac,
            "feather_frac": self.feather_frac,
            "placement": {
                "canvas_size": list(self.placement.canvas_size),
                "max_object_frac": self.placement.max_object_frac,
                "margin_frac": self.placement.margin_frac,
            },
            "pack": self.pack,
            "steps": self.steps,
            "guidance": self.guidance,
            "workers": self.workers,
        }


def write_run_config(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)
    doc = {"tool": "artaug", "version": __version__, "config": cfg.to_json()}
    path = out / "run_config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _load_image(cfg: RunConfig, rec: ImageRecord) -> np.ndarray:
    image = imgio.load_rgb(Path(cfg.image_root) / rec.file_name)
    if image.shape[:2] != (rec.height, rec.width):
        logger.warning(
            "image %s is %sx%s on disk but recorded as %sx%s",
            rec.file_name,
            image.shape[1],
            image.shape[0],
            rec.width,
            rec.height,
        )
    return image


def _item_digest(cfg: RunConfig, rec: ImageRecord, anns: list[Annotation], extra: str = "") -> str:
    """Content address for one output image, computable without pixels."""
    h = hashlib.blake2b(digest_size=16)
    descriptor = (
        cfg.strategy.value,
        cfg.global_seed,
        cfg.entropy_window,
        cfg.threshold_scope,
        (cfg.opbg.coverage, cfg.opbg.patch_frac, cfg.opbg.max_attempts),
        cfg.border_margin_frac,
        cfg.feather_frac,
        cfg.steps,
        cfg.guidance,
        rec.id,
        rec.file_name,
        tuple((a.id, a.category_id, tuple(a.bbox)) for a in anns),
        extra,
    )
    h.update(repr(descriptor).encode())
    return h.hexdigest()


def _effective_window(window: int, height: int, width: int) -> int:
    limit = min(height, width)
    if window <= limit:
        return window
    reduced = limit if limit % 2 == 1 else limit - 1
    reduced = max(3, reduced)
    logger.warning("entropy window %d exceeds image %dx%d; using %d", window, width, height, reduced)
    return reduced


def _scalar_map_for(strategy: StrategyKind, image: np.ndarray, window: int) -> ScalarMap:
    gray = to_grayscale(image)
    if strategy in (StrategyKind.ADAPT, StrategyKind.ENT_H, StrategyKind.ENT_L):
        h, w = gray.shape
        return local_entropy(gray, _effective_window(window, h, w))
    return gradient_magnitude(gray)


def _edge_feather(bbox: Box, feather_frac: float) -> int:
    min_side = min(bbox.w, bbox.h)
    return min(max(2, int(round(feather_frac * min_side))), min_side // 2)


@dataclass
class _ItemResult:
    image_rec: ImageRecord
    annotations: list[Annotation]
    report_lines: list[str]
    backend_calls: int
    skipped: bool


def _write_if_missing(path: Path, image: np.ndarray | None):
    if image is not None:
        imgio.save_png(path, image)


def _augment_one_inpaint(
    dataset: Dataset, rec: ImageRecord, cfg: RunConfig, backend, images_dir: Path
) -> _ItemResult:
    anns = list(dataset.annotations_for(rec.id))
    name = f"{cfg.strategy.value.lower()}_{_item_digest(cfg, rec, anns)}.png"
    out_path = images_dir / name
    resume = out_path.exists()
    out_rec = ImageRecord(rec.id, name, rec.width, rec.height)
    lines: list[str] = []
    out_anns: list[Annotation] = []
    calls = 0

    image = _load_image(cfg, rec)
    out = image.copy()

    if cfg.strategy in OBJECT_STRATEGIES:
        usable = [a for a in anns if a.bbox.w >= 2 and a.bbox.h >= 2]
        scalar = _scalar_map_for(cfg.strategy, image, cfg.entropy_window) if usable else None
        for ann in anns:
            if ann.bbox.w < 2 or ann.bbox.h < 2:
                logger.warning("annotation %d bbox too small to mask; left as-is", ann.id)
                out_anns.append(ann)
                lines.append(f"  ann {ann.id}: skipped (degenerate bbox)")
                continue
            mask = build_object_mask(cfg.strategy, scalar, ann.bbox, cfg.threshold_scope)
            seed = derive_seed(cfg.global_seed, rec.id, ann.id)
            category = dataset.category(ann.category_id)
            positive, negative = prompt_for(category)
            if not resume:
                crop = out[ann.bbox.y : ann.bbox.y2, ann.bbox.x : ann.bbox.x2]
                req = GenerationRequest.for_inpaint(
                    crop, mask, positive, negative, seed, steps=cfg.steps, guidance=cfg.guidance
                )
                out[ann.bbox.y : ann.bbox.y2, ann.bbox.x : ann.bbox.x2] = backend.inpaint(req).image
                calls += 1
            out_anns.append(replace(ann, provenance=Provenance.synthetic(cfg.strategy.value, seed)))
            lines.append(
                f"  ann {ann.id}: area_frac {mask.area_fraction:.6f} "
                f"contiguity {contiguity_ratio(mask):.6f}"
            )
    else:
        image_seed = derive_seed(cfg.global_seed, rec.id, cfg.strategy.value)
        if cfg.strategy is StrategyKind.OPBG:
            mask = mask_opbg(
                (rec.width, rec.height), [a.bbox for a in anns], cfg.opbg, image_seed
            )
        else:
            bits = np.zeros((rec.height, rec.width), dtype=bool)
            for ann in anns:
                bits |= mask_border(ann.bbox, (rec.width, rec.height), cfg.border_margin_frac).bits
            for ann in anns:
                b = clamp_box(ann.bbox, rec.width, rec.height)
                if b.w > 0 and b.h > 0:
                    bits[b.y : b.y2, b.x : b.x2] = False
            mask = Mask(bits, Frame.IMAGE)
        if mask.area > 0 and not resume:
            names = [dataset.category(a.category_id).name for a in anns]
            req = GenerationRequest.for_inpaint(
                out,
                mask,
                background_prompt(names),
                NEGATIVE_PROMPT,
                image_seed,
                steps=cfg.steps,
                guidance=cfg.guidance,
            )
            out = backend.inpaint(req).image
            calls += 1
        for ann in anns:
            out_anns.append(
                replace(ann, provenance=Provenance.synthetic(cfg.strategy.value, image_seed))
            )
        lines.append(
            f"  image mask: area_frac {mask.area_fraction:.6f} "
            f"contiguity {contiguity_ratio(mask):.6f}"
        )

    _write_if_missing(out_path, None if resume else out)
    header = f"image {rec.id} -> {name} annotations {len(anns)}"
    return _ItemResult(out_rec, out_anns, [header, *lines], calls, resume)


def _augment_one_edge(
    dataset: Dataset, rec: ImageRecord, cfg: RunConfig, backend, images_dir: Path
) -> _ItemResult:
    anns = list(dataset.annotations_for(rec.id))
    name = f"edge_{_item_digest(cfg, rec, anns)}.png"
    out_path = images_dir / name
    resume = out_path.exists()
    out_rec = ImageRecord(rec.id, name, rec.width, rec.height)
    lines: list[str] = []
    out_anns: list[Annotation] = []
    calls = 0

    image = _load_image(cfg, rec)
    out = image.copy()
    for ann in anns:
        seed = derive_seed(cfg.global_seed, rec.id, ann.id)
        feather = _edge_feather(ann.bbox, cfg.feather_frac)
        category = dataset.category(ann.category_id)
        positive, negative = prompt_for(category)
        if not resume:
            crop = image[ann.bbox.y : ann.bbox.y2, ann.bbox.x : ann.bbox.x2]
            if min(ann.bbox.w, ann.bbox.h) >= 3:
                edges = backend.extract_edges(crop)
            else:
                edges = EdgeMap(np.zeros((ann.bbox.h, ann.bbox.w), dtype=np.float64))
            req = GenerationRequest.for_edges(
                edges, positive, negative, seed, steps=cfg.steps, guidance=cfg.guidance
            )
            generated = backend.generate_from_edges(req).image
            out = blend_crop(out, generated, ann.bbox, BlendSpec(feather))
            calls += 1
        out_anns.append(replace(ann, provenance=Provenance.synthetic("EDGE", seed)))
        lines.append(f"  ann {ann.id}: feather {feather}")

    _write_if_missing(out_path, None if resume else out)
    header = f"image {rec.id} -> {name} annotations {len(anns)}"
    return _ItemResult(out_rec, out_anns, [header, *lines], calls, resume)


def _run_items(dataset: Dataset, cfg: RunConfig, worker) -> tuple[Dataset, str]:
    write_run_config(cfg)
    images_dir = Path(cfg.out_dir) / "images"
    backend = make_backend(cfg.backend)

    def job(rec: ImageRecord) -> _ItemResult:
        try:
            return worker(dataset, rec, cfg, backend, images_dir)
        except BackendError as exc:
            logger.error("image %d failed: %s (request %s)", rec.id, exc, exc.request_id)
            raise

    records = sorted(dataset.images, key=lambda r: r.id)
    if cfg.workers == 1:
        results = [job(rec) for rec in records]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, records))

    results.sort(key=lambda r: r.image_rec.id)
    augmented = Dataset(
        images=[r.image_rec for r in results],
        annotations=[a for r in results for a in r.annotations],
        categories=list(dataset.categories),
    )
    augmented.save(Path(cfg.out_dir) / "annotations.json")

    total_calls = sum(r.backend_calls for r in results)
    resumed = sum(1 for r in results if r.skipped)
    logger.info("run complete: %d backend calls, %d images resumed", total_calls, resumed)
    # the report carries only facts derivable from (dataset, config), so
    # fresh, resumed, and parallel runs all write identical bytes
    report_lines = [
        f"run strategy={cfg.strategy.cli_name} seed={cfg.global_seed} backend={cfg.backend.kind}",
        f"images {len(results)} annotations {sum(len(r.annotations) for r in results)}",
        "",
    ]
    for r in results:
        report_lines.extend(r.report_lines)
    report = "\n".join(report_lines) + "\n"
    (Path(cfg.out_dir) / "report.txt").write_text(report)
    return augmented, report


def run_inpaint_strategy(dataset: Dataset, cfg: RunConfig) -> tuple[Dataset, str]:
    """One masked-inpaint image per input image; annotations re-tagged."""
    if cfg.strategy not in INPAINT_STRATEGIES:
        raise ValueError(f"{cfg.strategy.cli_name} is not an inpaint strategy")
    return _run_items(dataset, cfg, _augment_one_inpaint)


def run_edge_replacement(dataset: Dataset, cfg: RunConfig) -> tuple[Dataset, str]:
    """Replace every annotated object with an edge-conditioned render."""
    if cfg.strategy is not StrategyKind.EDGE:
        raise ValueError("run_edge_replacement requires the EDGE strategy")
    return _run_items(dataset, cfg, _augment_one_edge)


def run_augment(dataset: Dataset, cfg: RunConfig) -> tuple[Dataset, str]:
    if cfg.strategy is StrategyKind.EDGE:
        return run_edge_replacement(dataset, cfg)
    return run_inpaint_strategy(dataset, cfg)


def _canvas_digest(cfg: RunConfig, canvas_index: int, chunk_meta) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(
        repr(
            (
                "balance",
                cfg.global_seed,
                cfg.steps,
                cfg.guidance,
                (cfg.placement.canvas_size, cfg.placement.max_object_frac, cfg.placement.margin_frac),
                canvas_index,
                chunk_meta,
            )
        ).encode()
    )
    return h.hexdigest()


def run_balance(dataset: Dataset, plan: BalancePlan, cfg: RunConfig) -> tuple[Dataset, str]:
    """Synthesize the planned object copies onto filled canvases.

    Each plan item becomes one placed object; canvases hold one object
    each unless cfg.pack groups up to four. Emitted per-class counts
    equal the plan by construction (deferred crops get fresh canvases).
    """
    write_run_config(cfg)
    images_dir = Path(cfg.out_dir) / "images"
    backend = make_backend(cfg.backend)
    ann_by_id = {a.id: a for a in dataset.annotations}
    cat_by_id = {c.id: c for c in dataset.categories}
    image_cache: dict[int, np.ndarray] = {}

    def source_image(image_id: int) -> np.ndarray:
        if image_id not in image_cache:
            image_cache[image_id] = _load_image(cfg, dataset.image(image_id))
        return image_cache[image_id]

    chunk_size = 4 if cfg.pack else 1
    pending = list(plan.items)
    chunks = [pending[i : i + chunk_size] for i in range(0, len(pending), chunk_size)]

    out_images: list[ImageRecord] = []
    out_anns: list[Annotation] = []
    report_lines: list[str] = []
    next_image_id = 1
    next_ann_id = 1
    canvas_index = 0
    calls = 0
    resumed = 0

    for chunk in chunks:
        # meta: everything needed to regenerate or re-place an item
        work = []
        for item in chunk:
            ann = ann_by_id[item.annotation_id]
            rec = dataset.image(item.image_id)
            b = clamp_box(ann.bbox, rec.width, rec.height)
            if b.w < 1 or b.h < 1:
                logger.warning(
                    "annotation %d: bbox degenerate after clamping; copy skipped",
                    item.annotation_id,
                )
                continue
            work.append(
                (
                    (item.annotation_id, item.image_id, item.category_id, item.copy_index),
                    item.category_id,
                )
            )
        queue = work
        while queue:
            metas = [m for m, _ in queue]
            name = f"balance_{_canvas_digest(cfg, canvas_index, tuple(metas))}.png"
            out_path = images_dir / name
            resume = out_path.exists()

            crops: list[tuple[np.ndarray, int]] = []
            for (ann_id, img_id, cat_id, copy_index), _ in queue:
                ann = ann_by_id[ann_id]
                rec = dataset.image(img_id)
                bbox = clamp_box(ann.bbox, rec.width, rec.height)
                if resume:
                    # placement depends only on crop size, so a gray
                    # stand-in reproduces the geometry without backend work
                    crops.append(
                        (np.full((bbox.h, bbox.w, 3), 128, dtype=np.uint8), cat_id)
                    )
                    continue
                src = source_image(img_id)
                crop = src[bbox.y : bbox.y2, bbox.x : bbox.x2]
                if min(bbox.w, bbox.h) >= 3:
                    edges = backend.extract_edges(crop)
                else:
                    edges = EdgeMap(np.zeros((bbox.h, bbox.w), dtype=np.float64))
                positive, negative = prompt_for(cat_by_id[cat_id])
                seed = derive_seed(cfg.global_seed, "balance", ann_id, copy_index)
                req = GenerationRequest.for_edges(
                    edges, positive, negative, seed, steps=cfg.steps, guidance=cfg.guidance
                )
                crops.append((backend.generate_from_edges(req).image, cat_id))
                calls += 1

            spec = replace(
                cfg.placement, seed=derive_seed(cfg.global_seed, "canvas", canvas_index)
            )
            placed = place_on_canvas(crops, spec, next_image_id, next_ann_id)
            if not placed.annotations and placed.deferred:
                raise RuntimeError("placement made no progress; canvas too small for crops")

            canvas = placed.image
            if not resume:
                names = sorted({cat_by_id[a.category_id].name for a in placed.annotations})
                canvas = context_fill(
                    placed.image,
                    placed.background_mask,
                    names,
                    backend,
                    seed=derive_seed(cfg.global_seed, "context", canvas_index),
                )
                calls += 1
                imgio.save_png(out_path, canvas)
            else:
                resumed += 1

            width, height = cfg.placement.canvas_size
            out_images.append(ImageRecord(next_image_id, name, width, height))
            out_anns.extend(placed.annotations)
            report_lines.append(
                f"canvas {canvas_index} -> {name} objects {len(placed.annotations)}"
            )
            next_image_id += 1
            next_ann_id += len(placed.annotations)
            canvas_index += 1
            queue = [(metas[i], queue[i][1]) for i in placed.deferred_indices]

    synthetic = Dataset(out_images, out_anns, list(dataset.categories))
    synthetic.save(Path(cfg.out_dir) / "annotations.json")

    emitted: dict[int, int] = {c.id: 0 for c in dataset.categories}
    for a in out_anns:
        emitted[a.category_id] += 1
    logger.info("balance complete: %d backend calls, %d canvases resumed", calls, resumed)
    summary = [
        f"balance run seed={cfg.global_seed} backend={cfg.backend.kind}",
        f"planned {plan.total} emitted {len(out_anns)} canvases {canvas_index}",
        "per-class planned/emitted:",
    ]
    for cid in sorted(emitted):
        planned = plan.entries[cid].planned_synthetic if cid in plan.entries else 0
        summary.append(f"  {cat_by_id[cid].name}: {planned}/{emitted[cid]}")
    report = "\n".join(summary + ["", *report_lines]) + "\n"
    (Path(cfg.out_dir) / "report.txt").write_text(report)
    return synthetic, report


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    kind: str  # "real" or "synthetic"
    image_count: int


@dataclass(frozen=True)
class ManifestStage:
    name: str
    datasets: tuple[ManifestEntry, ...]


@dataclass(frozen=True)
class Manifest:
    scheme: str
    stages: tuple[ManifestStage, ...]
    real_synthetic_ratio: str
    training_hints: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "real_synthetic_ratio": self.real_synthetic_ratio,
            "stages": [
                {
                    "name": stage.name,
                    "datasets": [
                        {"path": e.path, "kind": e.kind, "image_count": e.image_count}
                        for e in stage.datasets
                    ],
                }
                for stage in self.stages
            ],
            "training_hints": dict(self.training_hints),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def ratio_string(real_images: int, synthetic_images: int) -> str:
    total = real_images + synthetic_images
    if total == 0:
        raise ValueError("cannot compute a ratio with no images")
    real_pct = 100.0 * real_images / total
    return f"{real_pct:.1f} : {100.0 - real_pct:.1f}"


def emit_manifests(
    real: tuple[str, Dataset],
    synthetic: list[tuple[str, Dataset]],
    scheme: str,
) -> Manifest:
    """Build the training-order manifest for a detector run.

    ``mixed`` trains once on everything; the staged schemes order
    synthetic and real data into two finetuning stages.
    """
    if scheme not in MANIFEST_SCHEMES:
        raise ValueError(f"scheme must be one of {MANIFEST_SCHEMES}, got {scheme!r}")
    if not synthetic:
        raise ValueError("at least one synthetic dataset is required")
    real_path, real_ds = real
    real_entry = ManifestEntry(str(real_path), "real", len(real_ds.images))
    syn_entries = tuple(
        ManifestEntry(str(path), "synthetic", len(ds.images)) for path, ds in synthetic
    )
    n_real = real_entry.image_count
    n_syn = sum(e.image_count for e in syn_entries)
    ratio = ratio_string(n_real, n_syn)
    hints = {"learning_rate": TRAINING_LR}
    if scheme == "mixed":
        stages = (ManifestStage("joint", (real_entry, *syn_entries)),)
    else:
        hints["second_stage_learning_rate"] = TRAINING_LR_SECOND_STAGE
        if scheme == "aug_then_orig":
            stages = (
                ManifestStage("synthetic", syn_entries),
                ManifestStage("real", (real_entry,)),
            )
        else:
            stages = (
                ManifestStage("real", (real_entry,)),
                ManifestStage("synthetic", syn_entries),
            )
    return Manifest(scheme, stages, ratio, hints)
