"""Region summary reports: crater counts, density, size histogram, geo-located list."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .detector import DetectionRun
from .errors import ValidationError
from .geodesy import (
    GeoRegion,
    SceneScale,
    SizeClass,
    SizeThresholds,
    measure_diameter,
    size_class,
)

REPORT_VERSION = 1
HISTOGRAM_BINS = 8


@dataclass(frozen=True)
class CraterRecord:
    lat_deg: float
    lon_deg: float
    diameter: float  # km or px, per the thresholds the report was built with
    size_class: SizeClass
    confidence: float


@dataclass(frozen=True)
class RegionReport:
    region: GeoRegion
    image_id: str
    unit: str  # "km" | "px"
    counts: dict[str, int]
    area_km2: float
    density_per_km2: float
    histogram: list[tuple[float, float, int]]  # (lo, hi, count)
    craters: list[CraterRecord]


def _pixel_to_latlon(
    cx: float, cy: float, width: int, height: int, region: GeoRegion
) -> tuple[float, float]:
    # Linear interpolation within the region bounds. North-up images put
    # row 0 at lat_max; the flipped orientation puts it at lat_min.
    fx = min(max(cx / width, 0.0), 1.0)
    fy = min(max(cy / height, 0.0), 1.0)
    lon = region.lon_min_deg + fx * region.lon_span_deg
    if region.north_up:
        lat = region.lat_max_deg - fy * region.lat_span_deg
    else:
        lat = region.lat_min_deg + fy * region.lat_span_deg
    return lat, lon


def _log_histogram(diameters: list[float], n_bins: int = HISTOGRAM_BINS) -> list[tuple[float, float, int]]:
    if not diameters:
        return []
    lo, hi = min(diameters), max(diameters)
    if lo <= 0:
        lo = min(d for d in diameters if d > 0) if any(d > 0 for d in diameters) else 1e-6
    if hi <= lo:
        hi = lo * (1.0 + 1e-9)  # all diameters equal; widen a hair
    edges = [lo * (hi / lo) ** (i / n_bins) for i in range(n_bins + 1)]
    counts = [0] * n_bins
    for d in diameters:
        # place on the last bin whose lower edge is <= d (upper edge inclusive at the top)
        idx = min(
            n_bins - 1,
            max(0, int(n_bins * math.log(d / lo) / math.log(hi / lo)) if d > lo else 0),
        )
        counts[idx] += 1
    return [(edges[i], edges[i + 1], counts[i]) for i in range(n_bins)]


def region_report(
    run: DetectionRun,
    region: GeoRegion,
    scale: SceneScale | None,
    thresholds: SizeThresholds,
) -> RegionReport:
    """Summarize one detection run over a geo-referenced scene.

    Detections are classified by measured diameter, crater centers are
    interpolated to lat/lon inside the region bounds, and density uses the
    region's planar area.
    """
    if thresholds.unit_mode == "km" and scale is None:
        raise ValidationError("km-mode report requires a SceneScale")
    craters = []
    for det in run.detections:
        diameter = measure_diameter(det.box, thresholds, scale)
        cls = size_class(diameter, thresholds)
        cx, cy = det.box.center
        lat, lon = _pixel_to_latlon(cx, cy, run.width, run.height, region)
        craters.append(
            CraterRecord(
                lat_deg=lat,
                lon_deg=lon,
                diameter=diameter,
                size_class=cls,
                confidence=det.confidence,
            )
        )
    counts = {c.label: 0 for c in (SizeClass.LARGE, SizeClass.MEDIUM, SizeClass.SMALL)}
    for crater in craters:
        counts[crater.size_class.label] += 1
    area = region.area_km2()
    return RegionReport(
        region=region,
        image_id=run.image_id,
        unit=thresholds.unit_mode,
        counts=counts,
        area_km2=area,
        density_per_km2=len(craters) / area,
        histogram=_log_histogram([c.diameter for c in craters]),
        craters=craters,
    )


# --- rendering ------------------------------------------------------------------


def report_to_json(report: RegionReport) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "image_id": report.image_id,
        "unit": report.unit,
        "region": {
            "lat_min": report.region.lat_min_deg,
            "lat_max": report.region.lat_max_deg,
            "lon_min": report.region.lon_min_deg,
            "lon_max": report.region.lon_max_deg,
            "body": {"name": report.region.body.name, "radius_km": report.region.body.radius_km},
            "north_up": report.region.north_up,
        },
        "counts": dict(report.counts),
        "total": len(report.craters),
        "area_km2": report.area_km2,
        "density_per_km2": report.density_per_km2,
        "histogram": [{"lo": lo, "hi": hi, "count": n} for lo, hi, n in report.histogram],
        "craters": [
            {
                "lat_deg": c.lat_deg,
                "lon_deg": c.lon_deg,
                "diameter": c.diameter,
                "size_class": c.size_class.label,
                "confidence": c.confidence,
            }
            for c in report.craters
        ],
    }


def report_from_json(data: dict) -> RegionReport:
    from .geodesy import PlanetaryBody

    if data.get("report_version") != REPORT_VERSION:
        raise ValidationError(f"unsupported report version {data.get('report_version')!r}")
    r = data["region"]
    region = GeoRegion(
        lat_min_deg=r["lat_min"],
        lat_max_deg=r["lat_max"],
        lon_min_deg=r["lon_min"],
        lon_max_deg=r["lon_max"],
        body=PlanetaryBody(r["body"]["name"], r["body"]["radius_km"]),
        north_up=r.get("north_up", True),
    )
    labels = {c.label: c for c in SizeClass}
    return RegionReport(
        region=region,
        image_id=data["image_id"],
        unit=data["unit"],
        counts=dict(data["counts"]),
        area_km2=data["area_km2"],
        density_per_km2=data["density_per_km2"],
        histogram=[(h["lo"], h["hi"], h["count"]) for h in data["histogram"]],
        craters=[
            CraterRecord(
                lat_deg=c["lat_deg"],
                lon_deg=c["lon_deg"],
                diameter=c["diameter"],
                size_class=labels[c["size_class"]],
                confidence=c["confidence"],
            )
            for c in data["craters"]
        ],
    )


def _render_csv(report: RegionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["lat_deg", "lon_deg", "diameter", "size_class", "confidence"])
    for c in report.craters:
        writer.writerow([c.lat_deg, c.lon_deg, c.diameter, c.size_class.label, c.confidence])
    return buf.getvalue()


def _render_markdown(report: RegionReport) -> str:
    unit = report.unit
    lines = [
        f"# Crater report: {report.image_id}",
        "",
        f"Region: lat [{report.region.lat_min_deg}, {report.region.lat_max_deg}], "
        f"lon [{report.region.lon_min_deg}, {report.region.lon_max_deg}] "
        f"on {report.region.body.name}",
        "",
        "| Size class | Count |",
        "| --- | --- |",
    ]
    for label in ("Large", "Medium", "Small"):
        lines.append(f"| {label} | {report.counts.get(label, 0)} |")
    lines += [
        f"| **Total** | {len(report.craters)} |",
        "",
        f"Area: {report.area_km2:.2f} km², "
        f"density: {report.density_per_km2:.3f} craters/km²",
    ]
    if report.histogram:
        lines += ["", f"| Diameter bin ({unit}) | Count |", "| --- | --- |"]
        for lo, hi, n in report.histogram:
            lines.append(f"| {lo:.3g} – {hi:.3g} | {n} |")
    return "\n".join(lines) + "\n"


def render(report: RegionReport, format: str) -> str:
    """Render a report as json (canonical), csv (one crater per row), or markdown."""
    if format == "json":
        return json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        return _render_csv(report)
    if format == "markdown":
        return _render_markdown(report)
    raise ValidationError(f"unknown report format {format!r}")
