"""Pixel-to-kilometre conversion for small geo-referenced scenes and crater size classes.

Scenes here span a fraction of a degree, so a local equirectangular
approximation on a spherical body is used: N-S extent = dlat * (pi/180) * R,
E-W extent = dlon * (pi/180) * R * cos(mean latitude).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from .boxes import PixelBox
from .errors import ValidationError

# IAU mean radii; the regions of interest name only the body, so radii are
# supplied here and overridable per region file.
MARS_RADIUS_KM = 3389.5
MOON_RADIUS_KM = 1737.4


class SizeClass(IntEnum):
    """Crater size taxonomy. Ids follow the report-table convention:
    0 = Large, 1 = Small, 2 = Medium."""

    LARGE = 0
    SMALL = 1
    MEDIUM = 2

    @property
    def label(self) -> str:
        return {SizeClass.LARGE: "Large", SizeClass.SMALL: "Small", SizeClass.MEDIUM: "Medium"}[self]


#: Detection class ids that map onto crater size classes.
CRATER_CLASS_IDS = (SizeClass.LARGE.value, SizeClass.SMALL.value, SizeClass.MEDIUM.value)

#: Optional non-crater/background class id, accepted in annotations but
#: excluded from detection metrics.
BACKGROUND_CLASS_ID = 3


@dataclass(frozen=True)
class PlanetaryBody:
    name: str
    radius_km: float

    def __post_init__(self):
        if not (self.radius_km > 0 and math.isfinite(self.radius_km)):
            raise ValidationError(f"body radius must be positive, got {self.radius_km}")


MARS = PlanetaryBody("mars", MARS_RADIUS_KM)
MOON = PlanetaryBody("moon", MOON_RADIUS_KM)


@dataclass(frozen=True)
class GeoRegion:
    """Lat/lon bounds (degrees, lon east in [0, 360)) on a planetary body.

    Antimeridian-wrapping regions are not supported: both spans must be
    strictly increasing.
    """

    lat_min_deg: float
    lat_max_deg: float
    lon_min_deg: float
    lon_max_deg: float
    body: PlanetaryBody
    north_up: bool = True

    def __post_init__(self):
        if not (-90.0 <= self.lat_min_deg < self.lat_max_deg <= 90.0):
            raise ValidationError(
                f"latitude bounds [{self.lat_min_deg}, {self.lat_max_deg}] invalid"
            )
        if not (0.0 <= self.lon_min_deg < self.lon_max_deg < 360.0):
            raise ValidationError(
                f"longitude bounds [{self.lon_min_deg}, {self.lon_max_deg}] invalid"
            )

    @property
    def lat_span_deg(self) -> float:
        return self.lat_max_deg - self.lat_min_deg

    @property
    def lon_span_deg(self) -> float:
        return self.lon_max_deg - self.lon_min_deg

    @property
    def mean_lat_deg(self) -> float:
        return (self.lat_min_deg + self.lat_max_deg) / 2

    def north_south_extent_m(self) -> float:
        return math.radians(self.lat_span_deg) * self.body.radius_km * 1000.0

    def east_west_extent_m(self) -> float:
        return (
            math.radians(self.lon_span_deg)
            * self.body.radius_km
            * 1000.0
            * math.cos(math.radians(self.mean_lat_deg))
        )

    def area_km2(self) -> float:
        return (self.north_south_extent_m() / 1000.0) * (self.east_west_extent_m() / 1000.0)


@dataclass(frozen=True)
class SceneScale:
    """Ground resolution of one image, metres per pixel along each axis."""

    metres_per_px_x: float
    metres_per_px_y: float

    def __post_init__(self):
        for v in (self.metres_per_px_x, self.metres_per_px_y):
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"scale must be positive and finite, got {v}")


@dataclass(frozen=True)
class SizeThresholds:
    """Size-class boundaries.

    ``unit_mode`` selects the measurement: "km" classifies physical
    diameters derived from a SceneScale; "px" classifies raw pixel extents.
    The pixel mode exists because the labelled scenes are only ~10-14 km
    across, so kilometre thresholds cannot reproduce their "large" class.
    """

    small_max: float = 10.0
    large_min: float = 50.0
    unit_mode: str = "km"

    def __post_init__(self):
        if self.unit_mode not in ("km", "px"):
            raise ValidationError(f"unit_mode must be 'km' or 'px', got {self.unit_mode!r}")
        if not (0 < self.small_max < self.large_min):
            raise ValidationError(
                f"thresholds must satisfy 0 < small_max < large_min, "
                f"got {self.small_max}, {self.large_min}"
            )


def scene_scale(region: GeoRegion, image_width_px: int, image_height_px: int) -> SceneScale:
    """Derive metres/pixel for an image that exactly covers ``region``."""
    if image_width_px <= 0 or image_height_px <= 0:
        raise ValidationError(
            f"image dimensions must be positive, got {image_width_px}x{image_height_px}"
        )
    if abs(region.mean_lat_deg) >= 90.0:
        raise ValidationError("mean latitude at a pole; E-W scale undefined")
    return SceneScale(
        metres_per_px_x=region.east_west_extent_m() / image_width_px,
        metres_per_px_y=region.north_south_extent_m() / image_height_px,
    )


def box_diameter_km(box: PixelBox, scale: SceneScale) -> float:
    """Crater diameter in km: the larger of the box's two physical extents."""
    return max(box.width * scale.metres_per_px_x, box.height * scale.metres_per_px_y) / 1000.0


def box_diameter_px(box: PixelBox) -> float:
    """Crater diameter in pixels: the larger box extent."""
    return max(box.width, box.height)


def size_class(diameter: float, thresholds: SizeThresholds) -> SizeClass:
    """Classify a diameter (km or px, matching ``thresholds.unit_mode``).

    Boundary diameters land in MEDIUM: the medium band is the closed
    interval [small_max, large_min].
    """
    if diameter < 0:
        raise ValidationError(f"negative diameter {diameter}")
    if diameter < thresholds.small_max:
        return SizeClass.SMALL
    if diameter <= thresholds.large_min:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


def classify_box(box: PixelBox, thresholds: SizeThresholds, scale: SceneScale | None = None) -> SizeClass:
    """Measure a box in the thresholds' unit and classify it.

    ``scale`` is required in km mode and ignored in px mode.
    """
    if thresholds.unit_mode == "km":
        if scale is None:
            raise ValidationError("km-mode classification requires a SceneScale")
        return size_class(box_diameter_km(box, scale), thresholds)
    return size_class(box_diameter_px(box), thresholds)


def measure_diameter(box: PixelBox, thresholds: SizeThresholds, scale: SceneScale | None = None) -> float:
    """Box diameter in the thresholds' unit (km needs ``scale``)."""
    if thresholds.unit_mode == "km":
        if scale is None:
            raise ValidationError("km-mode measurement requires a SceneScale")
        return box_diameter_km(box, scale)
    return box_diameter_px(box)


def load_region(path: str | Path) -> GeoRegion:
    """Load a region file: JSON with lat/lon bounds and a body descriptor.

    Schema: {"lat_min", "lat_max", "lon_min", "lon_max",
             "body": {"name", "radius_km"}, "north_up"?: bool}
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read region file {path}: {exc}") from exc
    try:
        body = data["body"]
        return GeoRegion(
            lat_min_deg=float(data["lat_min"]),
            lat_max_deg=float(data["lat_max"]),
            lon_min_deg=float(data["lon_min"]),
            lon_max_deg=float(data["lon_max"]),
            body=PlanetaryBody(name=str(body["name"]), radius_km=float(body["radius_km"])),
            north_up=bool(data.get("north_up", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed region file {path}: {exc}") from exc


def save_region(region: GeoRegion, path: str | Path) -> None:
    payload = {
        "lat_min": region.lat_min_deg,
        "lat_max": region.lat_max_deg,
        "lon_min": region.lon_min_deg,
        "lon_max": region.lon_max_deg,
        "body": {"name": region.body.name, "radius_km": region.body.radius_km},
        "north_up": region.north_up,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
