"""Axis-aligned box types: normalized annotation boxes and pixel-space boxes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class PixelBox:
    """Box in pixel coordinates, corners at (x_min, y_min) and (x_max, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(
                f"degenerate pixel box ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2

    def translate(self, dx: float, dy: float) -> "PixelBox":
        return PixelBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


@dataclass(frozen=True)
class NormBox:
    """YOLO-style box: class id plus center/size normalized to image dimensions.

    Centers may sit close enough to an edge that the box overhangs; the
    overhang is clamped away at denormalization time, so it is not an error
    here.
    """

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValidationError(f"negative class id {self.class_id}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValidationError(f"box center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValidationError(f"box size ({self.w}, {self.h}) outside (0, 1]")


def denormalize(box: NormBox, width_px: int, height_px: int) -> PixelBox:
    """Convert a normalized box to pixel corners, clamped to the image bounds."""
    if width_px <= 0 or height_px <= 0:
        raise ValidationError(f"non-positive image dims {width_px}x{height_px}")
    x_min = max(0.0, (box.cx - box.w / 2) * width_px)
    y_min = max(0.0, (box.cy - box.h / 2) * height_px)
    x_max = min(float(width_px), (box.cx + box.w / 2) * width_px)
    y_max = min(float(height_px), (box.cy + box.h / 2) * height_px)
    return PixelBox(x_min, y_min, x_max, y_max)


def normalize(box: PixelBox, width_px: int, height_px: int, class_id: int = 0) -> NormBox:
    """Inverse of :func:`denormalize` for boxes inside the image."""
    if width_px <= 0 or height_px <= 0:
        raise ValidationError(f"non-positive image dims {width_px}x{height_px}")
    cx, cy = box.center
    return NormBox(
        class_id=class_id,
        cx=cx / width_px,
        cy=cy / height_px,
        w=box.width / width_px,
        h=box.height / height_px,
    )
