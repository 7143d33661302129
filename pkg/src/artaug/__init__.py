"""artaug: diffusion-backed dataset augmentation for artwork object detection.

Masked inpainting with seven masking strategies, edge-conditioned object
replacement, tiered class balancing onto synthetic canvases, training
manifest emission, and COCO-style mAP evaluation. Generation is
delegated to a pluggable backend: a deterministic in-process mock or a
remote diffusion service.
"""

__version__ = "0.1.0"

from .backend import BackendConfig, GenerationRequest, GenerationResult, make_backend
from .balance import SCHEDULE, augs_per_instance, balanced_count, build_plan
from .boxes import Box
from .dataset import Annotation, Category, Dataset, ImageRecord, load_dataset, split
from .evaluator import Detection, EvalResult, iou, map_coco
from .masks import Mask, StrategyKind, contiguity_ratio
from .pipeline import (
    Manifest,
    RunConfig,
    emit_manifests,
    prompt_for,
    run_augment,
    run_balance,
    run_edge_replacement,
    run_inpaint_strategy,
)

__all__ = [
    "__version__",
    "Annotation",
    "BackendConfig",
    "Box",
    "Category",
    "Dataset",
    "Detection",
    "EvalResult",
    "GenerationRequest",
    "GenerationResult",
    "ImageRecord",
    "Manifest",
    "Mask",
    "RunConfig",
    "SCHEDULE",
    "StrategyKind",
    "augs_per_instance",
    "balanced_count",
    "build_plan",
    "contiguity_ratio",
    "emit_manifests",
    "iou",
    "load_dataset",
    "make_backend",
    "map_coco",
    "prompt_for",
    "run_augment",
    "run_balance",
    "run_edge_replacement",
    "run_inpaint_strategy",
    "split",
]
