"""Choropleth SVG maps of municipalities colored by status, period or level."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .classify import EvolutionLevel
from .directory import NOT_SPECIFIED, DirectoryEntry, OperatingStatus

Point = tuple[float, float]
Ring = tuple[Point, ...]

#: 4-step gray scale, darkest first
DEFAULT_GRAYS = ("#404040", "#737373", "#a6a6a6", "#d9d9d9")
MISSING_FILL = "#f5f5f5"
MISSING_LABEL = "No data"

DIMENSIONS = ("status", "period", "level")


class GeoError(ValueError):
    pass


@dataclass(frozen=True)
class GeoFeature:
    inegi_id: str
    rings: tuple[Ring, ...]


@dataclass(frozen=True)
class GeoCatalog:
    features: tuple[GeoFeature, ...]

    def __post_init__(self) -> None:
        ids = [f.inegi_id for f in self.features]
        if len(set(ids)) != len(ids):
            raise GeoError("duplicate inegi_id among geo features")
        for feature in self.features:
            for ring in feature.rings:
                if len(ring) < 4:
                    raise GeoError(f"ring with fewer than 4 points in {feature.inegi_id}")
                if ring[0] != ring[-1]:
                    raise GeoError(f"unclosed ring in {feature.inegi_id}")


def _rings_from_geometry(geometry: dict) -> list[Ring]:
    kind = geometry.get("type")
    coords = geometry.get("coordinates") or []
    if kind == "Polygon":
        polygons = [coords]
    elif kind == "MultiPolygon":
        polygons = coords
    else:
        raise GeoError(f"unsupported geometry type {kind!r}")
    rings: list[Ring] = []
    for polygon in polygons:
        for ring in polygon:
            rings.append(tuple((float(x), float(y)) for x, y in ring))
    return rings


def load_geo_catalog(
    source, id_property: str = "inegi_id", projection: str = "planar"
) -> GeoCatalog:
    """Read a GeoJSON-subset FeatureCollection (Polygon/MultiPolygon).

    Coordinates are taken as planar by default; projection="lonlat"
    applies an equirectangular transform (x scaled by cos of the mean
    latitude) for raw longitude/latitude input.
    """
    if hasattr(source, "read"):
        data = json.load(source)
    else:
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    if data.get("type") != "FeatureCollection":
        raise GeoError("expected a GeoJSON FeatureCollection")
    features: list[GeoFeature] = []
    for feature in data.get("features", []):
        properties = feature.get("properties") or {}
        if id_property not in properties:
            raise GeoError(f"feature without {id_property!r} property")
        rings = _rings_from_geometry(feature.get("geometry") or {})
        features.append(GeoFeature(str(properties[id_property]), tuple(rings)))
    if projection == "lonlat":
        features = _project_equirectangular(features)
    elif projection != "planar":
        raise GeoError(f"unknown projection {projection!r}")
    return GeoCatalog(tuple(features))


def _project_equirectangular(features: list[GeoFeature]) -> list[GeoFeature]:
    latitudes = [pt[1] for f in features for ring in f.rings for pt in ring]
    if not latitudes:
        return features
    scale = math.cos(math.radians(sum(latitudes) / len(latitudes)))
    projected = []
    for feature in features:
        rings = tuple(tuple((x * scale, y) for x, y in ring) for ring in feature.rings)
        projected.append(GeoFeature(feature.inegi_id, rings))
    return projected


@dataclass(frozen=True)
class ChoroplethStyle:
    dimension: str  # "status" | "period" | "level"
    palette: tuple[tuple[str, str], ...]  # ordered (category, fill) pairs
    missing_fill: str = MISSING_FILL
    stroke: str = "#333333"
    stroke_width: float = 0.5

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise GeoError(f"unknown map dimension {self.dimension!r}")


def _gray_ramp(n: int) -> list[str]:
    if n <= 0:
        return []
    if n == 1:
        return [DEFAULT_GRAYS[0]]
    low, high = 0x40, 0xD9
    ramp = []
    for i in range(n):
        value = round(low + (high - low) * i / (n - 1))
        ramp.append(f"#{value:02x}{value:02x}{value:02x}")
    return ramp


def category_of(entry: DirectoryEntry, dimension: str) -> str:
    if dimension == "status":
        return entry.status.value
    if dimension == "period":
        return entry.period.render()
    if dimension == "level":
        return entry.level.label if entry.level is not None else NOT_SPECIFIED
    raise GeoError(f"unknown map dimension {dimension!r}")


def style_for(dimension: str, entries: Sequence[DirectoryEntry] = ()) -> ChoroplethStyle:
    """Default gray-scale style; period palettes are derived from the data
    (most recent period darkest)."""
    if dimension == "status":
        palette = tuple(zip((s.value for s in OperatingStatus), DEFAULT_GRAYS))
    elif dimension == "level":
        labels = [level.label for level in sorted(EvolutionLevel, reverse=True)]
        palette = tuple(zip(labels, DEFAULT_GRAYS))
    elif dimension == "period":
        categories = sorted(
            {category_of(e, "period") for e in entries} - {NOT_SPECIFIED}, reverse=True
        )
        fills = _gray_ramp(len(categories))
        palette = tuple(zip(categories, fills)) + ((NOT_SPECIFIED, "#eeeeee"),)
    else:
        raise GeoError(f"unknown map dimension {dimension!r}")
    return ChoroplethStyle(dimension=dimension, palette=palette)


def catalog_bounds(catalog: GeoCatalog) -> tuple[float, float, float, float]:
    xs = [pt[0] for f in catalog.features for ring in f.rings for pt in ring]
    ys = [pt[1] for f in catalog.features for ring in f.rings for pt in ring]
    return min(xs), min(ys), max(xs), max(ys)


def viewbox_for(catalog: GeoCatalog) -> tuple[float, float, float, float]:
    """Catalog bounds plus a 2% margin on every side."""
    min_x, min_y, max_x, max_y = catalog_bounds(catalog)
    margin = 0.02 * max(max_x - min_x, max_y - min_y, 1e-9)
    return (min_x - margin, min_y - margin, (max_x - min_x) + 2 * margin, (max_y - min_y) + 2 * margin)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


@dataclass(frozen=True)
class RenderedMap:
    byte_count: int
    missing_geometry: tuple[str, ...]  # inegi_ids of entries with no feature


def render_choropleth(
    catalog: GeoCatalog,
    entries: Iterable[DirectoryEntry],
    style: ChoroplethStyle,
    sink,
) -> RenderedMap:
    """Render one SVG path per feature, filled by the entry's category.

    Features are emitted in inegi_id order; identical inputs produce
    byte-identical SVG. Entries without geometry are reported back as
    coverage warnings while the map still renders.
    """
    if not catalog.features:
        raise GeoError("empty geo catalog")
    by_id = {e.municipality.inegi_id: e for e in entries if e.municipality.inegi_id}
    feature_ids = {f.inegi_id for f in catalog.features}
    missing_geometry = tuple(sorted(set(by_id) - feature_ids))

    min_x, min_y, max_x, max_y = catalog_bounds(catalog)
    flip = min_y + max_y  # screen y grows downward
    vb = viewbox_for(catalog)
    palette_map = dict(style.palette)

    used_categories: set[str] = set()
    used_missing = False
    paths: list[str] = []
    for feature in sorted(catalog.features, key=lambda f: f.inegi_id):
        entry = by_id.get(feature.inegi_id)
        if entry is None:
            fill = style.missing_fill
            used_missing = True
        else:
            category = category_of(entry, style.dimension)
            if category in palette_map:
                fill = palette_map[category]
                used_categories.add(category)
            else:
                fill = style.missing_fill
                used_missing = True
        d_parts = []
        for ring in feature.rings:
            points = [f"{_fmt(x)},{_fmt(flip - y)}" for x, y in ring]
            d_parts.append("M " + " L ".join(points) + " Z")
        paths.append(
            f'<path id="muni-{feature.inegi_id}" fill="{fill}" d="{" ".join(d_parts)}"/>'
        )

    legend_items = [(cat, fill) for cat, fill in style.palette if cat in used_categories]
    if used_missing:
        legend_items.append((MISSING_LABEL, style.missing_fill))

    swatch = 0.05 * max(vb[2], vb[3])
    font = 0.6 * swatch
    legend_parts = [f'<g id="legend" font-family="sans-serif" font-size="{_fmt(font)}">']
    for idx, (category, fill) in enumerate(legend_items):
        x = vb[0] + swatch * 0.5
        y = vb[1] + swatch * 0.5 + idx * swatch * 1.4
        legend_parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(swatch)}" height="{_fmt(swatch)}" '
            f'fill="{fill}" stroke="{style.stroke}" stroke-width="{_fmt(style.stroke_width / 2)}"/>'
        )
        legend_parts.append(
            f'<text x="{_fmt(x + swatch * 1.3)}" y="{_fmt(y + swatch * 0.8)}">{_xml_escape(category)}</text>'
        )
    legend_parts.append("</g>")

    svg = "\n".join(
        [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'viewBox="{_fmt(vb[0])} {_fmt(vb[1])} {_fmt(vb[2])} {_fmt(vb[3])}">',
            f'<g id="features" stroke="{style.stroke}" stroke-width="{_fmt(style.stroke_width)}">',
            *paths,
            "</g>",
            *legend_parts,
            "</svg>",
        ]
    ) + "\n"
    data = svg.encode("utf-8")
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)
    return RenderedMap(len(data), missing_geometry)


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
