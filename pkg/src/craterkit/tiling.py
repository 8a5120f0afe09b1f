"""Sliding-window plans for tiled detection over large images."""

from __future__ import annotations

from dataclasses import dataclass

from .boxes import PixelBox
from .errors import ValidationError


@dataclass(frozen=True)
class TileConfig:
    tile_size_px: int = 640
    overlap_frac: float = 0.30

    def __post_init__(self):
        if self.tile_size_px <= 0:
            raise ValidationError(f"tile size must be positive, got {self.tile_size_px}")
        if not (0.0 <= self.overlap_frac <= 0.9):
            raise ValidationError(f"overlap_frac must be in [0, 0.9], got {self.overlap_frac}")
        if self.stride < 1:
            raise ValidationError(
                f"tile {self.tile_size_px} with overlap {self.overlap_frac} gives stride < 1"
            )

    @property
    def stride(self) -> int:
        return round(self.tile_size_px * (1.0 - self.overlap_frac))


@dataclass(frozen=True)
class Window:
    """One sliding window. Always tile-sized; ``pad`` marks windows that
    extend past the image edge (only possible when the image is smaller
    than a tile along that axis) and must be black-filled by the caller."""

    x0: int
    y0: int
    w: int
    h: int
    pad: bool = False

    def contains(self, box: PixelBox) -> bool:
        """True when the box lies fully inside this window."""
        return (
            box.x_min >= self.x0
            and box.y_min >= self.y0
            and box.x_max <= self.x0 + self.w
            and box.y_max <= self.y0 + self.h
        )


@dataclass(frozen=True)
class TilePlan:
    windows: tuple[Window, ...]
    image_w: int
    image_h: int
    config: TileConfig


def _axis_starts(dim: int, tile: int, stride: int) -> list[int]:
    # Regular starts at multiples of the stride while the window still fits,
    # then one flush start ending exactly at the image edge if needed.
    if dim <= tile:
        return [0]
    starts = list(range(0, dim - tile + 1, stride))
    if starts[-1] != dim - tile:
        starts.append(dim - tile)
    return starts


def plan_tiles(image_w: int, image_h: int, config: TileConfig | None = None) -> TilePlan:
    """Plan row-major sliding-window coverage of an image.

    Every image pixel falls in at least one window; images smaller than a
    tile get a single padded window.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValidationError(f"image dims must be positive, got {image_w}x{image_h}")
    config = config or TileConfig()
    tile, stride = config.tile_size_px, config.stride
    windows = []
    for y0 in _axis_starts(image_h, tile, stride):
        for x0 in _axis_starts(image_w, tile, stride):
            pad = x0 + tile > image_w or y0 + tile > image_h
            windows.append(Window(x0=x0, y0=y0, w=tile, h=tile, pad=pad))
    return TilePlan(windows=tuple(windows), image_w=image_w, image_h=image_h, config=config)


def to_global(box: PixelBox, window_origin: tuple[int, int]) -> PixelBox:
    """Translate a window-local box into the global image frame."""
    x0, y0 = window_origin
    return box.translate(x0, y0)


def check_within_window(box: PixelBox, window: Window, tol: float = 1e-6) -> bool:
    """Window-local box lies within the window extent (backend contract)."""
    return (
        box.x_min >= -tol
        and box.y_min >= -tol
        and box.x_max <= window.w + tol
        and box.y_max <= window.h + tol
    )


def plan_to_json(plan: TilePlan) -> dict:
    return {
        "image_w": plan.image_w,
        "image_h": plan.image_h,
        "tile_size": plan.config.tile_size_px,
        "overlap_frac": plan.config.overlap_frac,
        "stride": plan.config.stride,
        "windows": [
            {"x0": w.x0, "y0": w.y0, "w": w.w, "h": w.h, "pad": w.pad} for w in plan.windows
        ],
    }
