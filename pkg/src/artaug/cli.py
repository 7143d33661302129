"""Command-line entry point.

Subcommands cover the whole workflow: ingest/validate a dataset, view
class statistics and balancing tiers, inspect masks, run augmentation
and balancing, emit training manifests, score detections, and dump
diagnostic renderings.

Exit codes: 0 success, 1 validation/input error, 2 backend failure
after retries, 64 usage error. A JSON config file may supply any flag
(``--config``); explicit flags override it. The remote backend URL
falls back to the ARTAUG_REMOTE_URL environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, imgio
from .analysis import edge_map_classical, gradient_magnitude, local_entropy, to_grayscale
from .backend import BackendConfig, BackendError
from .balance import (
    augs_per_instance,
    balanced_count,
    build_plan,
    format_plan,
    format_shortfall,
    shortfall_report,
)
from .compositor import PlacementSpec
from .dataset import DatasetError, class_stats, load_dataset
from .evaluator import format_eval, load_detections, map_coco
from .masks import (
    OBJECT_STRATEGIES,
    OpbgConfig,
    StrategyKind,
    build_object_mask,
    contiguity_ratio,
    mask_border,
    mask_opbg,
)
from .pipeline import RunConfig, emit_manifests, run_augment, run_balance
from .rng import derive_seed

logger = logging.getLogger(__name__)

ENV_REMOTE_URL = "ARTAUG_REMOTE_URL"
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BACKEND = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_dataset_args(p, images_required=True):
    p.add_argument("--annotations", required=True, help="COCO-shaped annotation document")
    p.add_argument("--images", required=images_required, help="image root directory")


def _add_backend_args(p):
    p.add_argument("--backend", choices=["mock", "remote"], default="mock")
    p.add_argument("--remote-url", default="", help=f"service URL (or ${ENV_REMOTE_URL})")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--in-flight", type=int, default=2, help="max concurrent remote requests")
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--guidance", type=float, default=7.5)


def build_parser() -> _Parser:
    parser = _Parser(prog="artaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"artaug {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a dataset")
    _add_dataset_args(p)
    p.add_argument("--strict", action="store_true", help="also open every image file")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="class histogram and balancing-tier preview")
    _add_dataset_args(p, images_required=False)
    p.add_argument("--min-target", type=int, default=1000)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("mask", help="write strategy masks for inspection")
    _add_dataset_args(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--coverage", type=float, default=0.25)
    p.add_argument("--border-margin", type=float, default=0.1)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("augment", help="run one augmentation strategy")
    _add_dataset_args(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--coverage", type=float, default=0.25)
    p.add_argument("--border-margin", type=float, default=0.1)
    p.add_argument("--feather-frac", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("balance", help="synthesize canvases for rare classes")
    _add_dataset_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-target", type=int, default=1000)
    p.add_argument("--canvas", type=int, nargs=2, default=[512, 512], metavar=("W", "H"))
    p.add_argument("--pack", action="store_true", help="up to 4 objects per canvas")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_balance)

    p = sub.add_parser("manifest", help="emit a training-order manifest")
    p.add_argument("--real", required=True, help="real dataset annotation document")
    p.add_argument("--synthetic", required=True, nargs="+", help="synthetic annotation documents")
    p.add_argument("--scheme", required=True, choices=["mixed", "aug-then-orig", "orig-then-aug"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_manifest)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("visualize", help="dump diagnostic renderings")
    _add_dataset_args(p)
    p.add_argument("--what", required=True, choices=["entropy", "saliency", "edges", "masks"])
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", default="ENT-H", help="strategy for --what masks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=9)
    p.set_defaults(func=_cmd_visualize)

    for sp in sub.choices.values():
        sp.add_argument("--config", default="", help="JSON file supplying flag defaults")

    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into synthetic flags placed before user flags,
    so explicitly passed flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv  # argparse will report the missing value
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2 :]
    values = json.loads(Path(path).read_text())
    if not isinstance(values, dict):
        raise DatasetError(f"config file {path} must hold a JSON object")
    command_at = next((i for i, tok in enumerate(rest) if not tok.startswith("-")), None)
    if command_at is None:
        return rest
    synthetic: list[str] = []
    for key in sorted(values):
        flag = "--" + key.replace("_", "-")
        value = values[key]
        if isinstance(value, bool):
            if value:
                synthetic.append(flag)
        elif isinstance(value, list):
            synthetic.extend([flag, *[str(v) for v in value]])
        else:
            synthetic.extend([flag, str(value)])
    return rest[: command_at + 1] + synthetic + rest[command_at + 1 :]


def _backend_config(ns) -> BackendConfig:
    if ns.backend == "mock":
        return BackendConfig()
    url = ns.remote_url or os.environ.get(ENV_REMOTE_URL, "")
    if not url:
        raise ValueError(
            f"remote backend requires --remote-url or the {ENV_REMOTE_URL} environment variable"
        )
    return BackendConfig(
        "remote",
        url,
        timeout=ns.timeout,
        max_retries=ns.retries,
        max_in_flight=ns.in_flight,
    )


def _cmd_ingest(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images, strict=ns.strict)
    print(
        f"ok: {len(ds.images)} images, {len(ds.annotations)} annotations, "
        f"{len(ds.categories)} categories"
    )
    return EXIT_OK


def _cmd_stats(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images)
    stats = class_stats(ds)
    print(f"{'category':<28} {'count':>7} {'copies':>7} {'balanced':>9}")
    for cat in sorted(ds.categories, key=lambda c: stats[c.id]):
        count = stats[cat.id]
        print(
            f"{cat.name:<28} {count:>7} {augs_per_instance(count):>7} "
            f"{balanced_count(count):>9}"
        )
    print()
    print(format_shortfall(shortfall_report(ds, ns.min_target), ns.min_target), end="")
    return EXIT_OK


def _cmd_mask(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images)
    strategy = StrategyKind.from_cli(ns.strategy)
    if strategy is StrategyKind.EDGE:
        raise ValueError("EDGE has no inpainting mask; use visualize --what edges")
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for rec in sorted(ds.images, key=lambda r: r.id):
        image = imgio.load_rgb(Path(ns.images) / rec.file_name)
        anns = ds.annotations_for(rec.id)
        if strategy in OBJECT_STRATEGIES:
            gray = to_grayscale(image)
            if strategy in (StrategyKind.SAL_H, StrategyKind.SAL_L):
                scalar = gradient_magnitude(gray)
            else:
                scalar = local_entropy(gray, ns.window)
            for ann in anns:
                if ann.bbox.w < 2 or ann.bbox.h < 2:
                    logger.warning("annotation %d bbox too small; skipped", ann.id)
                    continue
                mask = build_object_mask(strategy, scalar, ann.bbox)
                path = out / f"{strategy.cli_name}_{rec.id}_{ann.id}.png"
                imgio.save_mask_png(path, mask.bits)
                print(
                    f"{path.name}: area_frac {mask.area_fraction:.4f} "
                    f"contiguity {contiguity_ratio(mask):.4f}"
                )
                written += 1
        else:
            if strategy is StrategyKind.OPBG:
                mask = mask_opbg(
                    (rec.width, rec.height),
                    [a.bbox for a in anns],
                    OpbgConfig(coverage=ns.coverage),
                    derive_seed(ns.seed, rec.id, "OPBG"),
                )
            else:
                bits = np.zeros((rec.height, rec.width), dtype=bool)
                for ann in anns:
                    bits |= mask_border(ann.bbox, (rec.width, rec.height), ns.border_margin).bits
                from .masks import Frame, Mask

                mask = Mask(bits, Frame.IMAGE)
            path = out / f"{strategy.cli_name}_{rec.id}.png"
            imgio.save_mask_png(path, mask.bits)
            print(
                f"{path.name}: area_frac {mask.area_fraction:.4f} "
                f"contiguity {contiguity_ratio(mask):.4f}"
            )
            written += 1
    print(f"wrote {written} masks to {out}")
    return EXIT_OK


def _run_config_from(ns, strategy: StrategyKind) -> RunConfig:
    return RunConfig(
        strategy=strategy,
        global_seed=ns.seed,
        backend=_backend_config(ns),
        image_root=ns.images,
        out_dir=ns.out,
        entropy_window=getattr(ns, "window", 9),
        opbg=OpbgConfig(coverage=getattr(ns, "coverage", 0.25)),
        border_margin_frac=getattr(ns, "border_margin", 0.1),
        feather_frac=getattr(ns, "feather_frac", 0.05),
        placement=PlacementSpec(canvas_size=tuple(getattr(ns, "canvas", [512, 512]))),
        pack=getattr(ns, "pack", False),
        steps=ns.steps,
        guidance=ns.guidance,
        workers=ns.workers,
    )


def _cmd_augment(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images)
    strategy = StrategyKind.from_cli(ns.strategy)
    cfg = _run_config_from(ns, strategy)
    augmented, _ = run_augment(ds, cfg)
    print(
        f"augmented {len(augmented.images)} images "
        f"({len(augmented.annotations)} annotations) -> {cfg.out_dir}"
    )
    return EXIT_OK


def _cmd_balance(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images)
    plan = build_plan(ds)
    cfg = _run_config_from(ns, StrategyKind.EDGE)
    synthetic, _ = run_balance(ds, plan, cfg)
    names = {c.id: c.name for c in ds.categories}
    (Path(cfg.out_dir) / "plan.csv").write_text(format_plan(plan, names))
    shortfall = format_shortfall(shortfall_report(ds, ns.min_target), ns.min_target)
    (Path(cfg.out_dir) / "shortfall.txt").write_text(shortfall)
    print(f"synthesized {len(synthetic.annotations)} objects on {len(synthetic.images)} canvases")
    print(shortfall, end="")
    return EXIT_OK


def _cmd_manifest(ns) -> int:
    real = (ns.real, load_dataset(ns.real))
    synthetic = [(p, load_dataset(p)) for p in ns.synthetic]
    manifest = emit_manifests(real, synthetic, ns.scheme.replace("-", "_"))
    manifest.save(ns.out)
    print(f"scheme {manifest.scheme}: {len(manifest.stages)} stage(s), "
          f"real:synthetic = {manifest.real_synthetic_ratio}")
    return EXIT_OK


def _cmd_evaluate(ns) -> int:
    gt = load_dataset(ns.gt)
    dets = load_detections(ns.pred)
    result = map_coco(dets, list(gt.annotations))
    names = {c.id: c.name for c in gt.categories}
    print(format_eval(result, names), end="")
    return EXIT_OK


def _cmd_visualize(ns) -> int:
    ds = load_dataset(ns.annotations, image_root=ns.images)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    for rec in sorted(ds.images, key=lambda r: r.id):
        image = imgio.load_rgb(Path(ns.images) / rec.file_name)
        gray = to_grayscale(image)
        if ns.what == "entropy":
            imgio.save_gray_png(out / f"entropy_{rec.id}.png", local_entropy(gray, ns.window).values)
        elif ns.what == "saliency":
            imgio.save_gray_png(out / f"saliency_{rec.id}.png", gradient_magnitude(gray).values)
        elif ns.what == "edges":
            edges = edge_map_classical(gray)
            imgio.save_mask_png(out / f"edges_{rec.id}.png", edges.values > 0.5)
        else:
            strategy = StrategyKind.from_cli(ns.strategy)
            overlay = image.copy()
            anns = ds.annotations_for(rec.id)
            if strategy in OBJECT_STRATEGIES:
                if strategy in (StrategyKind.SAL_H, StrategyKind.SAL_L):
                    scalar = gradient_magnitude(gray)
                else:
                    scalar = local_entropy(gray, ns.window)
                for ann in anns:
                    if ann.bbox.w < 2 or ann.bbox.h < 2:
                        continue
                    mask = build_object_mask(strategy, scalar, ann.bbox)
                    region = overlay[ann.bbox.y : ann.bbox.y2, ann.bbox.x : ann.bbox.x2]
                    region[mask.bits] = (
                        region[mask.bits] // 2 + np.array([128, 0, 0], dtype=np.uint8)
                    )
            elif strategy is StrategyKind.OPBG:
                mask = mask_opbg(
                    (rec.width, rec.height),
                    [a.bbox for a in anns],
                    OpbgConfig(),
                    derive_seed(ns.seed, rec.id, "OPBG"),
                )
                overlay[mask.bits] = overlay[mask.bits] // 2 + np.array([128, 0, 0], dtype=np.uint8)
            else:
                bits = np.zeros((rec.height, rec.width), dtype=bool)
                for ann in anns:
                    bits |= mask_border(ann.bbox, (rec.width, rec.height)).bits
                overlay[bits] = overlay[bits] // 2 + np.array([128, 0, 0], dtype=np.uint8)
            imgio.save_png(out / f"masks_{strategy.cli_name}_{rec.id}.png", overlay)
    print(f"wrote renderings to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    raw = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _inject_config(raw)
    except (OSError, json.JSONDecodeError, DatasetError) as exc:
        logger.error("bad config file: %s", exc)
        return EXIT_INVALID
    try:
        ns = parser.parse_args(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except BackendError as exc:
        logger.error("backend failure: %s (request %s)", exc, exc.request_id)
        return EXIT_BACKEND
    except (DatasetError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
