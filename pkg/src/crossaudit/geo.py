"""Geodesic distance, centroids, point-in-polygon, and a grid index.

Distances are great-circle on a sphere (IUGG mean radius). Centroids are
planar in lon/lat, which is fine for the building-scale geometries this
toolkit conflates. Longitude wrap-around at the antimeridian is not
handled; the study areas are far from it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

__all__ = [
    "EARTH_RADIUS_M",
    "DEFAULT_CELL_SIZE_DEG",
    "GeoPoint",
    "PointGeom",
    "PolygonGeom",
    "MultiPolygonGeom",
    "Geometry",
    "haversine_distance",
    "polygon_centroid",
    "point_in_region",
    "geometry_bounds",
    "SpatialIndex",
    "build_spatial_index",
    "nearest_within",
]

log = logging.getLogger(__name__)

# IUGG mean Earth radius; error vs the ellipsoid is far below the 30 m
# granularity of any analysis built on top.
EARTH_RADIUS_M = 6_371_008.8

# ~1.1 km cells: at least half the default 500 m match cutoff at
# mid-European latitudes, so one ring expansion usually settles a query.
DEFAULT_CELL_SIZE_DEG = 0.01

_METERS_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates: ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class PointGeom:
    point: GeoPoint


@dataclass(frozen=True)
class PolygonGeom:
    """Closed rings (first vertex repeated last), exterior ring first."""

    rings: tuple[tuple[GeoPoint, ...], ...]

    def __post_init__(self) -> None:
        if not self.rings:
            raise ValueError("polygon needs at least one ring")
        for ring in self.rings:
            if len(ring) < 4:
                raise ValueError("ring needs at least 3 distinct vertices")
            if ring[0] != ring[-1]:
                raise ValueError("ring is not closed")


@dataclass(frozen=True)
class MultiPolygonGeom:
    polygons: tuple[PolygonGeom, ...]

    def __post_init__(self) -> None:
        if not self.polygons:
            raise ValueError("multipolygon needs at least one polygon")


Geometry = Union[PointGeom, PolygonGeom, MultiPolygonGeom]


def haversine_distance(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance in meters between two WGS84 points."""
    for v in (p.lat, p.lon, q.lat, q.lon):
        if not math.isfinite(v):
            raise ValueError("non-finite coordinate")
    phi1 = math.radians(p.lat)
    phi2 = math.radians(q.lat)
    dphi = math.radians(q.lat - p.lat)
    dlam = math.radians(q.lon - p.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _ring_area_centroid(ring: Sequence[GeoPoint]) -> tuple[float, float, float]:
    """Shoelace area (absolute) and centroid of one closed ring.

    Planar in (lon, lat); returns (area, centroid_lon, centroid_lat).
    """
    a2 = 0.0  # twice the signed area
    cx = 0.0
    cy = 0.0
    for i in range(len(ring) - 1):
        x1, y1 = ring[i].lon, ring[i].lat
        x2, y2 = ring[i + 1].lon, ring[i + 1].lat
        cross = x1 * y2 - x2 * y1
        a2 += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if a2 == 0.0:
        return 0.0, 0.0, 0.0
    return abs(a2) / 2.0, cx / (3.0 * a2), cy / (3.0 * a2)


def _vertex_mean(points: Iterable[GeoPoint]) -> GeoPoint:
    pts = list(points)
    return GeoPoint(
        lat=sum(p.lat for p in pts) / len(pts),
        lon=sum(p.lon for p in pts) / len(pts),
    )


def _polygon_area_centroid(poly: PolygonGeom) -> tuple[float, float, float]:
    """Net area (exterior minus holes) and weighted centroid of a polygon."""
    area = 0.0
    wx = 0.0
    wy = 0.0
    for i, ring in enumerate(poly.rings):
        a, cx, cy = _ring_area_centroid(ring)
        sign = 1.0 if i == 0 else -1.0
        area += sign * a
        wx += sign * a * cx
        wy += sign * a * cy
    return area, wx, wy


def polygon_centroid(geometry: Geometry) -> GeoPoint:
    """Area-weighted planar centroid; points map to themselves.

    Zero-area geometries fall back to the mean of their distinct vertices
    (logged, since it signals a degenerate input).
    """
    if isinstance(geometry, PointGeom):
        return geometry.point
    if isinstance(geometry, PolygonGeom):
        polys = (geometry,)
    elif isinstance(geometry, MultiPolygonGeom):
        polys = geometry.polygons
    else:
        raise ValueError(f"unsupported geometry: {type(geometry).__name__}")

    area = 0.0
    wx = 0.0
    wy = 0.0
    for poly in polys:
        a, px, py = _polygon_area_centroid(poly)
        area += a
        wx += px
        wy += py
    if area > 0.0:
        return GeoPoint(lat=wy / area, lon=wx / area)
    log.warning("degenerate zero-area geometry; falling back to vertex mean")
    vertices = [v for poly in polys for ring in poly.rings for v in ring[:-1]]
    return _vertex_mean(vertices)


def _on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool:
    """True when p lies on the closed segment a-b (planar lon/lat)."""
    cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon)
    scale = max(abs(b.lon - a.lon), abs(b.lat - a.lat), 1e-30)
    if abs(cross) > 1e-12 * scale:
        return False
    if min(a.lon, b.lon) - 1e-15 <= p.lon <= max(a.lon, b.lon) + 1e-15:
        if min(a.lat, b.lat) - 1e-15 <= p.lat <= max(a.lat, b.lat) + 1e-15:
            return True
    return False


def _rings_of(geometry: Geometry) -> Iterable[Sequence[GeoPoint]]:
    if isinstance(geometry, PolygonGeom):
        yield from geometry.rings
    elif isinstance(geometry, MultiPolygonGeom):
        for poly in geometry.polygons:
            yield from poly.rings
    else:
        raise ValueError("point geometries have no rings")


def point_in_region(p: GeoPoint, region) -> bool:
    """Even-odd ray casting over all rings; boundary points count inside.

    Accepts a Region-like object (anything with a .geometry) or a bare
    geometry value.
    """
    geometry = getattr(region, "geometry", region)
    if isinstance(geometry, PointGeom):
        return geometry.point == p
    inside = False
    for ring in _rings_of(geometry):
        n = len(ring) - 1
        for i in range(n):
            a, b = ring[i], ring[i + 1]
            if _on_segment(p, a, b):
                return True
            if (a.lat > p.lat) != (b.lat > p.lat):
                x_cross = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
                if p.lon < x_cross:
                    inside = not inside
    return inside


def geometry_bounds(geometry: Geometry) -> tuple[float, float, float, float]:
    """(min_lat, min_lon, max_lat, max_lon) of any geometry."""
    if isinstance(geometry, PointGeom):
        p = geometry.point
        return p.lat, p.lon, p.lat, p.lon
    lats: list[float] = []
    lons: list[float] = []
    for ring in _rings_of(geometry):
        for v in ring:
            lats.append(v.lat)
            lons.append(v.lon)
    return min(lats), min(lons), max(lats), max(lons)


@dataclass(frozen=True)
class SpatialIndex:
    """Uniform lat/lon grid over (id, point) pairs.

    Cell assignment is floor(coordinate / cell_size_deg); each point lives
    in exactly one cell. Immutable after build, safe for concurrent reads.
    """

    cell_size_deg: float
    cells: dict[tuple[int, int], list[tuple[int, GeoPoint]]]
    point_count: int
    cell_bounds: tuple[int, int, int, int] | None  # (min_i, max_i, min_j, max_j)


def _cell_of(p: GeoPoint, cell_size_deg: float) -> tuple[int, int]:
    return (
        math.floor(p.lat / cell_size_deg),
        math.floor(p.lon / cell_size_deg),
    )


def build_spatial_index(
    points: Iterable[tuple[int, GeoPoint]],
    cell_size_deg: float = DEFAULT_CELL_SIZE_DEG,
) -> SpatialIndex:
    if cell_size_deg <= 0:
        raise ValueError(f"cell_size_deg must be positive, got {cell_size_deg}")
    cells: dict[tuple[int, int], list[tuple[int, GeoPoint]]] = {}
    count = 0
    for pid, point in points:
        cells.setdefault(_cell_of(point, cell_size_deg), []).append((pid, point))
        count += 1
    bounds = None
    if cells:
        bounds = (
            min(i for i, _ in cells),
            max(i for i, _ in cells),
            min(j for _, j in cells),
            max(j for _, j in cells),
        )
    return SpatialIndex(
        cell_size_deg=cell_size_deg,
        cells=cells,
        point_count=count,
        cell_bounds=bounds,
    )


def _ring_lower_bound_m(q: GeoPoint, ring: int, cell_size_deg: float) -> float:
    """Smallest distance any point in a cell at Chebyshev ring `ring` can have.

    A cell at ring r differs from the query's cell by r cells in latitude
    or in longitude, so the coordinate gap is at least (r-1) cells. A pure
    latitude gap of g degrees means at least g in arc; a pure longitude gap
    shrinks with the cosine of the most polar latitude reachable within the
    ring's band. The returned value is shaved by a hair so float rounding
    can never make it exceed a true distance.
    """
    if ring <= 0:
        return 0.0
    gap_deg = (ring - 1) * cell_size_deg
    d_lat = math.radians(gap_deg) * EARTH_RADIUS_M
    band_lat = min(90.0, abs(q.lat) + (ring + 1) * cell_size_deg)
    cos_band = max(0.0, math.cos(math.radians(band_lat)))
    d_lon = (
        2.0
        * EARTH_RADIUS_M
        * math.asin(min(1.0, cos_band * math.sin(math.radians(gap_deg) / 2.0)))
    )
    return min(d_lat, d_lon) * (1.0 - 1e-9)


def _ring_cells(center: tuple[int, int], ring: int) -> Iterable[tuple[int, int]]:
    ci, cj = center
    if ring == 0:
        yield (ci, cj)
        return
    for j in range(cj - ring, cj + ring + 1):
        yield (ci - ring, j)
        yield (ci + ring, j)
    for i in range(ci - ring + 1, ci + ring):
        yield (i, cj - ring)
        yield (i, cj + ring)


def nearest_within(
    index: SpatialIndex, q: GeoPoint, cutoff_m: float
) -> tuple[int, float] | None:
    """Globally nearest indexed point within cutoff_m, or None.

    Expands cell rings outward until the ring's minimum possible distance
    exceeds both the best hit so far and the cutoff. Exact distance ties
    break toward the smaller id, matching an exhaustive scan.
    """
    if cutoff_m <= 0:
        raise ValueError(f"cutoff_m must be positive, got {cutoff_m}")
    if index.point_count == 0 or index.cell_bounds is None:
        return None

    center = _cell_of(q, index.cell_size_deg)
    min_i, max_i, min_j, max_j = index.cell_bounds
    max_ring = max(
        abs(center[0] - min_i),
        abs(center[0] - max_i),
        abs(center[1] - min_j),
        abs(center[1] - max_j),
    )

    best_id: int | None = None
    best_d = math.inf
    for ring in range(0, max_ring + 1):
        if _ring_lower_bound_m(q, ring, index.cell_size_deg) > min(best_d, cutoff_m):
            break
        for cell in _ring_cells(center, ring):
            bucket = index.cells.get(cell)
            if not bucket:
                continue
            for pid, point in bucket:
                d = haversine_distance(q, point)
                if d < best_d or (d == best_d and (best_id is None or pid < best_id)):
                    best_d = d
                    best_id = pid
    if best_id is None or best_d > cutoff_m:
        return None
    return best_id, best_d
