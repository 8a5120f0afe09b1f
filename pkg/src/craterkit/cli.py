"""Command-line surface for batch pipeline runs.

Subcommands: dataset (validate|split|crop|stats), tile plan, detect, eval,
rank, report. Exit codes: 0 success, 1 validation error, 2 backend failure,
64 usage. Outputs go to --out paths; logs are line-delimited JSON events on
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .annotations import (
    AnnotatedImage,
    DatasetLayout,
    SplitSpec,
    dataset_stats,
    format_stats_table,
    load_annotated_dir,
    load_dataset,
    parse_label_file,
    remap_class_ids,
    split_dataset,
    write_split,
    IMAGE_SUFFIXES,
    SPLIT_NAMES,
)
from .annotations import crop_for_classifier
from .boxes import denormalize
from .config import PipelineConfig, config_from_dict, config_hash, config_to_dict, load_config
from .detector import (
    BridgeBackend,
    ImageHandle,
    ReplayOracleBackend,
    detect_direct,
    detect_tiled,
    load_runs,
    save_runs,
)
from .errors import BackendError, LabelParseError, ValidationError
from .evaluation import (
    aggregate_runs,
    evaluate_runs,
    format_aggregate_table,
    format_metrics_table,
    format_rank_table,
    mean_rank,
    metrics_to_json,
)
from .geodesy import load_region, scene_scale
from .report import region_report, render, report_to_json
from .tiling import plan_tiles, plan_to_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def emit_event(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _provenance(cfg: PipelineConfig, command: str) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _effective_config(args) -> PipelineConfig:
    """Config file merged with flag overrides; flags win.

    The config path itself may come from the CRATERKIT_CONFIG environment
    variable (paths are the only settings env vars may supply).
    """
    data = {}
    config_path = getattr(args, "config", None) or os.environ.get("CRATERKIT_CONFIG")
    if config_path:
        data = json.loads(Path(config_path).read_text())
        if not isinstance(data, dict):
            raise ValidationError(f"config {config_path} must be a JSON object")
    overrides = {
        "tile_size": getattr(args, "tile_size", None),
        "overlap": getattr(args, "overlap", None),
        "nms_iou": getattr(args, "nms_iou", None),
        "match_iou": getattr(args, "match_iou", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "region": getattr(args, "region", None),
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    thresholds = dict(data.get("thresholds", {}))
    for key, flag in (("small_max", "small_max"), ("large_min", "large_min"), ("unit_mode", "unit_mode")):
        value = getattr(args, flag, None)
        if value is not None:
            thresholds[key] = value
    if thresholds:
        data["thresholds"] = thresholds
    backend = dict(data.get("backend", {}))
    if getattr(args, "backend", None):
        backend["kind"] = args.backend
    if getattr(args, "bridge_command", None):
        backend["command"] = shlex.split(args.bridge_command)
    for flag in ("drop_prob", "jitter_px"):
        value = getattr(args, flag, None)
        if value is not None:
            backend[flag] = value
    if backend:
        data["backend"] = backend
    split = dict(data.get("split", {}))
    for name in ("train", "val", "test"):
        value = getattr(args, f"{name}_frac", None)
        if value is not None:
            split[name] = value
    if split:
        data["split"] = split
    return config_from_dict(data)


def _load_images(data_dir: str, split: str, class_map=()) -> list[AnnotatedImage]:
    root = Path(data_dir)
    has_splits = any((root / name).is_dir() for name in SPLIT_NAMES)
    if has_splits:
        layout = load_dataset(root)
        if split == "all":
            images = layout.all_images()
        else:
            images = layout.splits.get(split, [])
            if not images:
                raise ValidationError(f"split '{split}' of {root} is empty")
    else:
        images = load_annotated_dir(root)
    if class_map:
        images = remap_class_ids(images, dict(class_map))
    return images


def _make_backend(cfg: PipelineConfig, gt_images: list[AnnotatedImage]):
    if cfg.backend.kind == "replay":
        return ReplayOracleBackend(gt_images, cfg.backend.replay)
    return BridgeBackend(list(cfg.backend.command))


# --- subcommands ---------------------------------------------------------------


def cmd_dataset_validate(args) -> int:
    root = Path(args.data)
    issues = []
    n_images = n_boxes = 0
    split_dirs = [root / s for s in SPLIT_NAMES if (root / s).is_dir()] or [root]
    for split_dir in split_dirs:
        image_dir = split_dir / "images" if (split_dir / "images").is_dir() else split_dir
        if not image_dir.is_dir():
            issues.append({"path": str(image_dir), "error": "missing directory"})
            continue
        for path in sorted(image_dir.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            n_images += 1
            label = (
                split_dir / "labels" / (path.stem + ".txt")
                if (split_dir / "labels").is_dir()
                else path.with_suffix(".txt")
            )
            if not label.exists():
                continue
            try:
                boxes = parse_label_file(label)
            except LabelParseError as exc:
                issues.append({"path": str(label), "error": str(exc), "kind": exc.kind})
                continue
            n_boxes += len(boxes)
            for box in boxes:
                if box.class_id not in (0, 1, 2, 3):
                    issues.append(
                        {"path": str(label), "error": f"unexpected class id {box.class_id}"}
                    )
    for issue in issues:
        emit_event("dataset.invalid", **issue)
    summary = {"images": n_images, "boxes": n_boxes, "issues": len(issues)}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_VALIDATION if issues else EXIT_OK


def cmd_dataset_split(args) -> int:
    cfg = _effective_config(args)
    images = load_annotated_dir(args.data)
    spec = SplitSpec(
        train_frac=cfg.split.train_frac,
        val_frac=cfg.split.val_frac,
        test_frac=cfg.split.test_frac,
        seed=cfg.seed,
    )
    layout = split_dataset(images, spec)
    write_split(layout, args.out)
    meta = {
        "provenance": _provenance(cfg, "dataset split"),
        "split": {
            "train": spec.train_frac,
            "val": spec.val_frac,
            "test": spec.test_frac,
            "seed": spec.seed,
        },
        "counts": {name: len(layout.splits[name]) for name in SPLIT_NAMES},
        "augmentation": layout.augmentation,
    }
    _write_json(str(Path(args.out) / "dataset.json"), meta)
    emit_event("dataset.split", **meta["counts"])
    return EXIT_OK


def cmd_dataset_crop(args) -> int:
    out_root = Path(args.out)
    root = Path(args.data)
    has_splits = any((root / name).is_dir() for name in SPLIT_NAMES)
    groups = (
        {name: _load_images(args.data, name) for name in SPLIT_NAMES if (root / name).is_dir()}
        if has_splits
        else {"": load_annotated_dir(root)}
    )
    n_chips = 0
    for group, images in groups.items():
        for img in images:
            frame = np.asarray(Image.open(img.image_path))
            for i, box in enumerate(img.boxes):
                pbox = denormalize(box, img.width_px, img.height_px)
                chip = crop_for_classifier(frame, pbox, out_size_px=args.size)
                chip_dir = out_root / group / str(box.class_id)
                chip_dir.mkdir(parents=True, exist_ok=True)
                Image.fromarray(chip).save(chip_dir / f"{img.image_id}_{i}.png")
                n_chips += 1
    emit_event("dataset.crop", chips=n_chips, size=args.size)
    print(json.dumps({"chips": n_chips}))
    return EXIT_OK


def cmd_dataset_stats(args) -> int:
    cfg = _effective_config(args)
    layout = load_dataset(args.data)
    region = load_region(cfg.region) if cfg.region else None
    if cfg.thresholds.unit_mode == "km" and region is None:
        raise ValidationError("km-mode stats need a region file (--region)")
    stats = dataset_stats(layout, cfg.thresholds, region=region)
    print(format_stats_table(stats))
    if args.out:
        _write_json(args.out, {"provenance": _provenance(cfg, "dataset stats"), "stats": stats})
    return EXIT_OK


def cmd_tile_plan(args) -> int:
    cfg = _effective_config(args)
    plan = plan_tiles(args.width, args.height, cfg.tile_config())
    payload = {"provenance": _provenance(cfg, "tile plan"), **plan_to_json(plan)}
    if args.out:
        _write_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    emit_event("tile.plan", windows=len(plan.windows), width=args.width, height=args.height)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _effective_config(args)
    images = _load_images(args.data, args.split, cfg.class_map)
    gt_root = Path(args.data)
    if any((gt_root / s).is_dir() for s in SPLIT_NAMES):
        gt_images = load_dataset(gt_root).all_images()
        if cfg.class_map:
            gt_images = remap_class_ids(gt_images, dict(cfg.class_map))
    else:
        gt_images = images
    backend = _make_backend(cfg, gt_images)
    jobs = cfg.jobs if cfg.jobs is not None else (os.cpu_count() or 1)
    runs = []
    try:
        for img in images:
            handle = ImageHandle.from_annotated(img)
            if args.mode == "direct":
                run = detect_direct(
                    handle, backend, nms_iou=cfg.nms_iou, class_aware=cfg.class_aware_nms
                )
            else:
                plan = plan_tiles(handle.width, handle.height, cfg.tile_config())
                run = detect_tiled(
                    handle,
                    plan,
                    backend,
                    nms_iou=cfg.nms_iou,
                    class_aware=cfg.class_aware_nms,
                    jobs=jobs,
                )
            runs.append(run)
            emit_event(
                "detect.image", image=run.image_id, mode=run.mode, detections=len(run.detections)
            )
    finally:
        if isinstance(backend, BridgeBackend):
            backend.close()
    provenance = _provenance(cfg, "detect")
    provenance["backend"] = cfg.backend.kind
    provenance["mode"] = args.mode
    save_runs(runs, args.out, provenance)
    emit_event("detect.done", images=len(runs), out=args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _effective_config(args)
    images = _load_images(args.data, args.split, cfg.class_map)
    ground_truth = {img.image_id: img.pixel_boxes() for img in images}
    per_run_metrics = []
    for run_path in args.run:
        runs = load_runs(run_path)
        per_run_metrics.append(
            evaluate_runs(runs, ground_truth, iou_threshold=cfg.match_iou)
        )
    provenance = _provenance(cfg, "eval")
    provenance["match_iou"] = cfg.match_iou
    if len(per_run_metrics) == 1:
        metrics = per_run_metrics[0]
        print(format_metrics_table(metrics))
        payload = {"provenance": provenance, **metrics_to_json(metrics)}
    else:
        agg = aggregate_runs(per_run_metrics)
        print(format_aggregate_table(agg))
        payload = {
            "provenance": provenance,
            "n_runs": agg.n_runs,
            "per_class": {
                str(class_id): {
                    metric: {"mean": stats.mean, "std": stats.std}
                    for metric, stats in slots.items()
                }
                for class_id, slots in agg.per_class.items()
            },
            "support": {str(c): n for c, n in agg.support.items()},
        }
    if args.out:
        _write_json(args.out, payload)
    return EXIT_OK


def cmd_rank(args) -> int:
    cfg = _effective_config(args)
    try:
        scores = json.loads(Path(args.scores).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read scores file {args.scores}: {exc}") from exc
    if not isinstance(scores, dict) or not all(isinstance(v, dict) for v in scores.values()):
        raise ValidationError("scores file must map model -> class -> score")
    table = mean_rank(scores)
    print(format_rank_table(table))
    if args.out:
        _write_json(
            args.out,
            {
                "provenance": _provenance(cfg, "rank"),
                "ranks": {m: {str(c): r for c, r in table.ranks[m].items()} for m in table.models},
                "mean_rank": dict(table.mean_rank),
            },
        )
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _effective_config(args)
    if not cfg.region:
        raise ValidationError("report needs a region file (--region or config)")
    region = load_region(cfg.region)
    runs = load_runs(args.run)
    if args.image:
        matching = [r for r in runs if r.image_id == args.image]
        if not matching:
            raise ValidationError(f"run file has no image '{args.image}'")
        run = matching[0]
    elif len(runs) == 1:
        run = runs[0]
    else:
        raise ValidationError("run file has multiple images; pick one with --image")
    scale = (
        scene_scale(region, run.width, run.height)
        if cfg.thresholds.unit_mode == "km"
        else None
    )
    rep = region_report(run, region, scale, cfg.thresholds)
    if args.format == "json":
        payload = report_to_json(rep)
        payload["provenance"] = _provenance(cfg, "report")
        document = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        document = render(rep, args.format)
    if args.out:
        Path(args.out).write_text(document)
    else:
        print(document, end="")
    emit_event("report.done", image=rep.image_id, total=len(rep.craters))
    return EXIT_OK


# --- parser wiring ---------------------------------------------------------------


def _add_config_flags(p, thresholds=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    if thresholds:
        p.add_argument("--small-max", dest="small_max", type=float, default=None)
        p.add_argument("--large-min", dest="large_min", type=float, default=None)
        p.add_argument("--unit-mode", dest="unit_mode", choices=["km", "px"], default=None)
        p.add_argument("--region", default=None, help="region JSON file")


def build_parser() -> _Parser:
    parser = _Parser(prog="craterkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"craterkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="validate, split, crop, or summarize datasets")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)

    p = ds_sub.add_parser("validate", help="check label files and class ids")
    p.add_argument("--data", required=True)
    p.set_defaults(handler=cmd_dataset_validate)

    p = ds_sub.add_parser("split", help="partition a flat dataset into train/val/test")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train", dest="train_frac", type=float, default=None)
    p.add_argument("--val", dest="val_frac", type=float, default=None)
    p.add_argument("--test", dest="test_frac", type=float, default=None)
    _add_config_flags(p, thresholds=False)
    p.set_defaults(handler=cmd_dataset_split)

    p = ds_sub.add_parser("crop", help="extract classifier chips from annotated boxes")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(handler=cmd_dataset_crop)

    p = ds_sub.add_parser("stats", help="per-split size-class distribution")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_dataset_stats)

    tile = sub.add_parser("tile", help="sliding-window planning")
    tile_sub = tile.add_subparsers(dest="tile_command", required=True)
    p = tile_sub.add_parser("plan", help="emit the window plan for an image size")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    p.add_argument("--overlap", type=float, default=None)
    p.add_argument("--out", default=None)
    _add_config_flags(p, thresholds=False)
    p.set_defaults(handler=cmd_tile_plan)

    p = sub.add_parser("detect", help="run a backend over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="all", choices=["all", *SPLIT_NAMES])
    p.add_argument("--mode", required=True, choices=["direct", "tiled"])
    p.add_argument("--backend", default=None, choices=["replay", "bridge"])
    p.add_argument("--bridge-command", dest="bridge_command", default=None,
                   help="bridge child process command line (shell-quoted)")
    p.add_argument("--drop-prob", dest="drop_prob", type=float, default=None)
    p.add_argument("--jitter-px", dest="jitter_px", type=float, default=None)
    p.add_argument("--nms-iou", dest="nms_iou", type=float, default=None)
    p.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    p.add_argument("--overlap", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p, thresholds=False)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("eval", help="score run files against ground truth")
    p.add_argument("--run", action="append", required=True, help="run file (repeatable)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="all", choices=["all", *SPLIT_NAMES])
    p.add_argument("--match-iou", dest="match_iou", type=float, default=None)
    p.add_argument("--out", default=None)
    _add_config_flags(p, thresholds=False)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("rank", help="mean-rank model comparison from per-class scores")
    p.add_argument("--scores", required=True, help="JSON: model -> class -> score")
    p.add_argument("--out", default=None)
    _add_config_flags(p, thresholds=False)
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("report", help="region summary report from a run file")
    p.add_argument("--run", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--format", default="json", choices=["json", "csv", "markdown"])
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        emit_event("error", kind="validation", message=str(exc))
        return EXIT_VALIDATION
    except BackendError as exc:
        emit_event("error", kind="backend", message=str(exc))
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
