"""Box overlap and greedy non-maximum suppression for merged tile detections."""

from __future__ import annotations

from dataclasses import dataclass

from .boxes import PixelBox
from .errors import ValidationError


@dataclass(frozen=True)
class Detection:
    """A detected box with class and confidence; ``source_window`` indexes
    the tile-plan window it came from, when detected in tiled mode."""

    box: PixelBox
    class_id: int
    confidence: float
    source_window: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def sort_key(det: Detection) -> tuple:
    """Total ordering for detections: confidence descending, then geometry,
    then class. Total so that merge output never depends on input order."""
    b = det.box
    return (-det.confidence, b.x_min, b.y_min, det.class_id, b.x_max, b.y_max)


def nms(
    dets: list[Detection],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> list[Detection]:
    """Greedy suppression: keep the best remaining detection, drop any later
    one overlapping it above the threshold (same class only when
    ``class_aware``). Output preserves the kept order and is a subset of
    the input."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    kept: list[Detection] = []
    for det in sorted(dets, key=sort_key):
        suppressed = any(
            (not class_aware or k.class_id == det.class_id)
            and iou(k.box, det.box) > iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(det)
    return kept
