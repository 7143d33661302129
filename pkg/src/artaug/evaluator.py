"""COCO-style detection scoring: mAP averaged over IoU 0.50:0.05:0.95.

Matching follows the COCO definition: per class, detections sorted by
descending score (ties keep input order) greedily claim the unmatched
ground-truth box of highest IoU in their image, and the PR curve is
integrated on the 101-point recall grid. Classes without ground truth
are excluded from the mean rather than scored zero.

IoU thresholds are built as (50 + 5*i)/100 so that a ratio like 60/100
compares equal to its threshold exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Annotation, Dataset, DatasetError

IOU_THRESHOLDS: tuple[float, ...] = tuple((50 + 5 * i) / 100.0 for i in range(10))
_RECALL_GRID = np.array([i / 100.0 for i in range(101)])


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0,1], got {self.score}")
        _, _, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise ValueError(f"bbox extents must be positive, got {self.bbox}")


@dataclass(frozen=True)
class EvalResult:
    map_50_95: float
    per_iou: dict[float, float]
    per_class: dict[int, float]


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 if disjoint."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def _class_ap(dets: list[Detection], gts: list[Annotation], iou_thr: float) -> float:
    """AP for one class at one threshold (101-point interpolation)."""
    npos = len(gts)
    if npos == 0:
        raise ValueError("class AP undefined without ground truth")
    if not dets:
        return 0.0
    order = np.argsort(np.array([-d.score for d in dets]), kind="stable")
    gts_by_image: dict[int, list[int]] = {}
    for gi, gt in enumerate(gts):
        gts_by_image.setdefault(gt.image_id, []).append(gi)
    matched = [False] * npos
    tp = np.zeros(len(dets))
    for rank, di in enumerate(order):
        det = dets[int(di)]
        best_iou = 0.0
        best_gi = -1
        for gi in gts_by_image.get(det.image_id, ()):
            if matched[gi]:
                continue
            overlap = iou(det.bbox, tuple(gts[gi].bbox))
            if overlap > best_iou:
                best_iou = overlap
                best_gi = gi
        if best_gi >= 0 and best_iou >= iou_thr:
            matched[best_gi] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    recalls = cum_tp / npos
    precisions = cum_tp / np.arange(1, len(dets) + 1)
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, _RECALL_GRID, side="left")
    sampled = np.where(idx < len(dets), envelope[np.minimum(idx, len(dets) - 1)], 0.0)
    return float(sampled.mean())


def _group_by_class(dets: list[Detection], gts: list[Annotation]):
    det_by_class: dict[int, list[Detection]] = {}
    for d in dets:
        det_by_class.setdefault(d.category_id, []).append(d)
    gt_by_class: dict[int, list[Annotation]] = {}
    for g in gts:
        gt_by_class.setdefault(g.category_id, []).append(g)
    return det_by_class, gt_by_class


def average_precision(dets: list[Detection], gts: list[Annotation], iou_thr: float) -> float:
    """Class-mean AP at a single IoU threshold."""
    det_by_class, gt_by_class = _group_by_class(dets, gts)
    if not gt_by_class:
        raise ValueError("no ground truth to evaluate against")
    aps = [
        _class_ap(det_by_class.get(cid, []), class_gts, iou_thr)
        for cid, class_gts in sorted(gt_by_class.items())
    ]
    return float(np.mean(aps))


def map_coco(dets: list[Detection], gts: list[Annotation]) -> EvalResult:
    det_by_class, gt_by_class = _group_by_class(dets, gts)
    if not gt_by_class:
        raise ValueError("no ground truth to evaluate against")
    class_ids = sorted(gt_by_class)
    ap_table = {
        cid: [
            _class_ap(det_by_class.get(cid, []), gt_by_class[cid], thr)
            for thr in IOU_THRESHOLDS
        ]
        for cid in class_ids
    }
    per_iou = {
        thr: float(np.mean([ap_table[cid][ti] for cid in class_ids]))
        for ti, thr in enumerate(IOU_THRESHOLDS)
    }
    per_class = {cid: float(np.mean(ap_table[cid])) for cid in class_ids}
    map_50_95 = float(np.mean(list(per_iou.values())))
    return EvalResult(map_50_95, per_iou, per_class)


def load_detections(path) -> list[Detection]:
    """Read a COCO results file: a JSON list of detection records."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read detections from {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise DatasetError(f"detections file {path} must contain a JSON list")
    dets = []
    for i, rec in enumerate(raw):
        try:
            bbox = tuple(float(v) for v in rec["bbox"])
            if len(bbox) != 4:
                raise ValueError(f"bbox must have 4 values, got {len(bbox)}")
            dets.append(
                Detection(int(rec["image_id"]), int(rec["category_id"]), bbox, float(rec["score"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad detection record #{i} in {path}: {exc}") from exc
    return dets


def evaluate_files(gt_dataset: Dataset, detections: list[Detection]) -> EvalResult:
    return map_coco(detections, list(gt_dataset.annotations))


def format_eval(result: EvalResult, categories: dict[int, str] | None = None) -> str:
    lines = [f"map_50_95 = {result.map_50_95:.4f}", "", "per IoU threshold:"]
    for thr in sorted(result.per_iou):
        lines.append(f"  {thr:.2f}: {result.per_iou[thr]:.4f}")
    lines.append("")
    lines.append("per class:")
    for cid in sorted(result.per_class):
        name = categories.get(cid, str(cid)) if categories else str(cid)
        lines.append(f"  {name}: {result.per_class[cid]:.4f}")
    return "\n".join(lines) + "\n"
