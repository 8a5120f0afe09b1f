"""craterkit: batch two-stage crater detection over large planetary images.

Sliding-window tiled detection with NMS merging, geodetic size
classification, per-class evaluation with multi-run aggregation and
mean-rank model comparison, and region summary reporting. Detector models
plug in behind a replayable backend interface.
"""

__version__ = "0.1.0"

from .boxes import NormBox, PixelBox, denormalize, normalize
from .errors import BackendError, ClampWarning, CraterKitError, LabelParseError, ValidationError
from .geodesy import (
    GeoRegion,
    PlanetaryBody,
    SceneScale,
    SizeClass,
    SizeThresholds,
    box_diameter_km,
    scene_scale,
    size_class,
)
from .nms import Detection, iou, nms
from .tiling import TileConfig, TilePlan, Window, plan_tiles, to_global

__all__ = [
    "__version__",
    "NormBox",
    "PixelBox",
    "denormalize",
    "normalize",
    "BackendError",
    "ClampWarning",
    "CraterKitError",
    "LabelParseError",
    "ValidationError",
    "GeoRegion",
    "PlanetaryBody",
    "SceneScale",
    "SizeClass",
    "SizeThresholds",
    "box_diameter_km",
    "scene_scale",
    "size_class",
    "Detection",
    "iou",
    "nms",
    "TileConfig",
    "TilePlan",
    "Window",
    "plan_tiles",
    "to_global",
]
