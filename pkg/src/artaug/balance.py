"""Class-balancing schedule for augmentation planning.

A tiered lookup maps a class's instance count to the number of
synthetic copies each instance receives: rare classes get many copies,
common ones few, and anything beyond 3000 instances gets none. The
planner expands that into a concrete per-annotation work list and can
report which classes still fall short of a target after balancing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .dataset import Dataset, class_stats

logger = logging.getLogger(__name__)

# (upper bound on instance count, copies per instance); scanned in order
SCHEDULE: tuple[tuple[int, int], ...] = (
    (5, 335),
    (9, 130),
    (19, 80),
    (29, 45),
    (49, 35),
    (74, 20),
    (99, 15),
    (149, 10),
    (249, 7),
    (499, 3),
    (999, 2),
    (3000, 1),
)


def augs_per_instance(count: int) -> int:
    """Copies to synthesize per existing instance of a class.

    The smallest tier whose bound covers ``count`` decides, so the rate
    is monotone non-increasing from 0 upward; classes over 3000
    instances are already abundant and get 0. A zero-count class draws
    a warning — the first-tier rate applies, but with nothing to
    replicate every plan stays empty (0 instances x any rate = 0).
    """
    if count < 0:
        raise ValueError(f"instance count must be >= 0, got {count}")
    if count == 0:
        logger.warning("class has no instances; nothing to replicate")
    for bound, copies in SCHEDULE:
        if count <= bound:
            return copies
    return 0


def balanced_count(count: int) -> int:
    """Total instances after balancing: originals plus synthesized."""
    return count + count * augs_per_instance(count)


@dataclass(frozen=True)
class PlanItem:
    """One synthetic copy to produce."""

    annotation_id: int
    image_id: int
    category_id: int
    copy_index: int


@dataclass(frozen=True)
class PlanEntry:
    """Per-category plan arithmetic."""

    current: int
    augs_per_instance: int
    planned_synthetic: int


@dataclass(frozen=True)
class BalancePlan:
    items: tuple[PlanItem, ...]
    entries: dict[int, PlanEntry]

    @property
    def total(self) -> int:
        return len(self.items)


def build_plan(dataset: Dataset) -> BalancePlan:
    """Expand the schedule into one PlanItem per synthetic copy.

    Items are ordered by category id, then annotation id, then copy
    index, so the plan is deterministic for a given dataset. Every
    category gets an entry; planned_synthetic is always
    current * augs_per_instance.
    """
    stats = class_stats(dataset)
    by_category: dict[int, list] = {cat.id: [] for cat in dataset.categories}
    for ann in dataset.annotations:
        by_category[ann.category_id].append(ann)
    entries: dict[int, PlanEntry] = {}
    items: list[PlanItem] = []
    for cat in dataset.categories:
        count = stats[cat.id]
        copies = augs_per_instance(count)
        entries[cat.id] = PlanEntry(count, copies, count * copies)
        if copies == 0:
            continue
        for ann in sorted(by_category[cat.id], key=lambda a: a.id):
            for copy_index in range(copies):
                items.append(PlanItem(ann.id, ann.image_id, cat.id, copy_index))
    plan = BalancePlan(tuple(items), entries)
    logger.info("balance plan: %d synthetic instances across %d classes", plan.total, len(entries))
    return plan


def format_plan(plan: BalancePlan, categories: dict[int, str]) -> str:
    """CSV rendering of the per-category plan."""
    lines = ["category,current,augs_per_instance,planned_synthetic"]
    for cid in sorted(plan.entries):
        e = plan.entries[cid]
        lines.append(f"{categories.get(cid, cid)},{e.current},{e.augs_per_instance},{e.planned_synthetic}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ShortfallEntry:
    category_id: int
    name: str
    original: int
    balanced: int


def shortfall_report(dataset: Dataset, target: int = 1000) -> list[ShortfallEntry]:
    """Classes whose balanced totals still land below ``target``.

    The schedule cannot lift very rare classes (1 or 2 instances) to
    1000, so a nonempty report is expected on long-tailed data. Sorted
    by balanced count ascending, then category id.
    """
    stats = class_stats(dataset)
    entries = []
    for cat in dataset.categories:
        count = stats[cat.id]
        total = balanced_count(count)
        if total < target:
            entries.append(ShortfallEntry(cat.id, cat.name, count, total))
    entries.sort(key=lambda e: (e.balanced, e.category_id))
    return entries


def format_shortfall(entries: list[ShortfallEntry], target: int = 1000) -> str:
    if not entries:
        return f"all classes reach {target} instances after balancing\n"
    lines = [f"classes below {target} after balancing: {len(entries)}"]
    for e in entries:
        lines.append(
            f"  {e.name} (id {e.category_id}): {e.original} -> {e.balanced}"
        )
    return "\n".join(lines) + "\n"
