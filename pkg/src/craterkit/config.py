"""Pipeline configuration: one JSON file, flag overrides, strict keys, stable hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .annotations import SplitSpec
from .detector import ReplayConfig
from .errors import ValidationError
from .geodesy import SizeThresholds
from .tiling import TileConfig


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "replay"  # "replay" | "bridge"
    command: tuple[str, ...] = ()  # bridge child-process command line
    replay: ReplayConfig = field(default_factory=ReplayConfig)

    def __post_init__(self):
        if self.kind not in ("replay", "bridge"):
            raise ValidationError(f"backend kind must be 'replay' or 'bridge', got {self.kind!r}")
        if self.kind == "bridge" and not self.command:
            raise ValidationError("bridge backend requires a command line")


@dataclass(frozen=True)
class PipelineConfig:
    tile_size: int = 640
    overlap: float = 0.30
    nms_iou: float = 0.5
    class_aware_nms: bool = True
    match_iou: float = 0.5
    thresholds: SizeThresholds = field(default_factory=SizeThresholds)
    region: str | None = None
    backend: BackendSpec = field(default_factory=BackendSpec)
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    jobs: int | None = None
    class_map: tuple[tuple[int, int], ...] = ()  # annotation id remap for foreign datasets

    def tile_config(self) -> TileConfig:
        return TileConfig(tile_size_px=self.tile_size, overlap_frac=self.overlap)


def _require_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"unknown config key(s) in {where}: {sorted(unknown)}")


def config_from_dict(data: dict) -> PipelineConfig:
    _require_keys(
        data,
        {
            "tile_size", "overlap", "nms_iou", "class_aware_nms", "match_iou",
            "thresholds", "region", "backend", "seed", "split", "jobs", "class_map",
        },
        "config",
    )
    kwargs: dict[str, Any] = {}
    for key in ("tile_size", "seed"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("overlap", "nms_iou", "match_iou"):
        if key in data:
            kwargs[key] = float(data[key])
    if "class_aware_nms" in data:
        kwargs["class_aware_nms"] = bool(data["class_aware_nms"])
    if "region" in data and data["region"] is not None:
        kwargs["region"] = str(data["region"])
    if "jobs" in data and data["jobs"] is not None:
        kwargs["jobs"] = int(data["jobs"])
    if "class_map" in data:
        try:
            kwargs["class_map"] = tuple(
                sorted((int(k), int(v)) for k, v in data["class_map"].items())
            )
        except (AttributeError, TypeError, ValueError) as exc:
            raise ValidationError(f"class_map must map int to int: {exc}") from exc
    if "thresholds" in data:
        t = data["thresholds"]
        _require_keys(t, {"small_max", "large_min", "unit_mode"}, "thresholds")
        kwargs["thresholds"] = SizeThresholds(
            small_max=float(t.get("small_max", 10.0)),
            large_min=float(t.get("large_min", 50.0)),
            unit_mode=str(t.get("unit_mode", "km")),
        )
    if "split" in data:
        s = data["split"]
        _require_keys(s, {"train", "val", "test", "seed"}, "split")
        kwargs["split"] = SplitSpec(
            train_frac=float(s.get("train", 0.6)),
            val_frac=float(s.get("val", 0.1)),
            test_frac=float(s.get("test", 0.3)),
            seed=int(s.get("seed", 0)),
        )
    if "backend" in data:
        b = data["backend"]
        _require_keys(
            b, {"kind", "command", "drop_prob", "jitter_px", "conf_lo", "conf_hi"}, "backend"
        )
        replay = ReplayConfig(
            drop_prob=float(b.get("drop_prob", 0.0)),
            jitter_px=float(b.get("jitter_px", 0.0)),
            conf_range=(float(b.get("conf_lo", 1.0)), float(b.get("conf_hi", 1.0))),
            seed=int(data.get("seed", 0)),
        )
        kwargs["backend"] = BackendSpec(
            kind=str(b.get("kind", "replay")),
            command=tuple(str(c) for c in b.get("command", ())),
            replay=replay,
        )
    try:
        cfg = PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config: {exc}") from exc
    cfg.tile_config()  # validates tile_size/overlap eagerly
    for name in ("nms_iou", "match_iou"):
        value = getattr(cfg, name)
        if not (0.0 < value <= 1.0):
            raise ValidationError(f"{name} must be in (0, 1], got {value}")
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "tile_size": cfg.tile_size,
        "overlap": cfg.overlap,
        "nms_iou": cfg.nms_iou,
        "class_aware_nms": cfg.class_aware_nms,
        "match_iou": cfg.match_iou,
        "thresholds": {
            "small_max": cfg.thresholds.small_max,
            "large_min": cfg.thresholds.large_min,
            "unit_mode": cfg.thresholds.unit_mode,
        },
        "region": cfg.region,
        "backend": {
            "kind": cfg.backend.kind,
            "command": list(cfg.backend.command),
            "drop_prob": cfg.backend.replay.drop_prob,
            "jitter_px": cfg.backend.replay.jitter_px,
            "conf_lo": cfg.backend.replay.conf_range[0],
            "conf_hi": cfg.backend.replay.conf_range[1],
        },
        "seed": cfg.seed,
        "split": {
            "train": cfg.split.train_frac,
            "val": cfg.split.val_frac,
            "test": cfg.split.test_frac,
            "seed": cfg.split.seed,
        },
        "jobs": cfg.jobs,
        "class_map": {str(k): v for k, v in cfg.class_map},
    }


def load_config(path: str | Path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a JSON object")
    return config_from_dict(data)


def config_hash(cfg: PipelineConfig) -> str:
    """Stable hash of the result-affecting configuration.

    ``jobs`` is excluded: it only controls dispatch parallelism, and runs
    that differ solely in worker count must produce identical outputs.
    """
    payload = config_to_dict(cfg)
    payload.pop("jobs")
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
