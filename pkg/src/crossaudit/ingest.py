"""Acquisition and parsing of OSM extracts, regions, references, census data.

All parsers follow reject-list semantics: one bad record never aborts the
run, it lands in the result's reject list with a reason while parsing
continues. Only structurally broken documents raise ParseError.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import unicodedata
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping

import requests

from .errors import ParseError, ProtocolError, TransportError
from .geo import Geometry, GeoPoint, MultiPolygonGeom, PointGeom, PolygonGeom
from .model import (
    ElementKind,
    OsmElement,
    format_utc_timestamp,
    parse_utc_timestamp,
)

__all__ = [
    "Source",
    "RegionLevel",
    "Classification",
    "ElementSet",
    "Census",
    "Region",
    "ReferenceFeature",
    "CensusRow",
    "Reject",
    "OsmParseResult",
    "RegionParseResult",
    "ReferenceParseResult",
    "CensusParseResult",
    "parse_osm_json",
    "serialize_osm_json",
    "merge_element_sets",
    "build_overpass_query",
    "fetch_overpass",
    "parse_geojson_regions",
    "parse_reference_features",
    "parse_census_csv",
    "attach_census",
]

log = logging.getLogger(__name__)

OVERPASS_QUERY_TEMPLATE = (
    '[out:json][timeout:{timeout}];'
    'area["{area_key}"="{area_value}"]->.a;'
    'node["{key}"="{value}"](area.a);'
    'out meta;'
)


class Source(Enum):
    OVERPASS = "overpass"
    FILE = "file"


class RegionLevel(Enum):
    COUNTRY = "country"
    STATE = "state"
    DISTRICT = "district"
    COUNTY = "county"


class Classification(Enum):
    CLEARLY_CROSS = "clearly_cross"
    UNCLEAR = "unclear"
    OTHER = "other"


@dataclass(frozen=True)
class Reject:
    location: str
    reason: str


@dataclass(frozen=True)
class ElementSet:
    """A dated snapshot of OSM elements from one fetch or file."""

    elements: tuple[OsmElement, ...]
    snapshot_time: datetime
    source: Source

    def __post_init__(self) -> None:
        seen: set[tuple[ElementKind, int]] = set()
        for e in self.elements:
            key = (e.kind, e.id)
            if key in seen:
                raise ValueError(f"duplicate element {e.kind.value}/{e.id}")
            seen.add(key)

    def nodes(self) -> tuple[OsmElement, ...]:
        return tuple(e for e in self.elements if e.kind is ElementKind.NODE)


@dataclass(frozen=True)
class Census:
    catholic_share: float
    protestant_share: float
    population: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.catholic_share <= 1.0:
            raise ValueError(f"catholic_share out of [0,1]: {self.catholic_share}")
        if not 0.0 <= self.protestant_share <= 1.0:
            raise ValueError(f"protestant_share out of [0,1]: {self.protestant_share}")
        if self.catholic_share + self.protestant_share > 1.0 + 1e-9:
            raise ValueError("denomination shares sum to more than 1")


@dataclass(frozen=True)
class Region:
    """Named admin polygon used as the aggregation unit of all analyses."""

    region_id: str
    name: str
    level: RegionLevel
    geometry: PolygonGeom | MultiPolygonGeom
    area_km2: float
    census: Census | None = None

    def __post_init__(self) -> None:
        if self.area_km2 <= 0:
            raise ValueError(f"area_km2 must be positive: {self.area_km2}")


@dataclass(frozen=True)
class ReferenceFeature:
    """One entry of the external register to conflate against OSM."""

    ref_id: str
    geometry: Geometry | None
    classification: Classification

    @property
    def has_location(self) -> bool:
        return self.geometry is not None


@dataclass(frozen=True)
class CensusRow:
    region_id: str
    name: str
    catholic_share: float
    protestant_share: float
    area_km2: float


@dataclass(frozen=True)
class OsmParseResult:
    element_set: ElementSet
    rejects: tuple[Reject, ...]
    duplicate_count: int


@dataclass(frozen=True)
class RegionParseResult:
    regions: tuple[Region, ...]
    rejects: tuple[Reject, ...]


@dataclass(frozen=True)
class ReferenceParseResult:
    features: tuple[ReferenceFeature, ...]
    rejects: tuple[Reject, ...]


@dataclass(frozen=True)
class CensusParseResult:
    rows: dict[str, CensusRow]
    rejects: tuple[Reject, ...]


def _as_text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def parse_osm_json(
    data: bytes | str, source: Source = Source.FILE
) -> OsmParseResult:
    """Parse the Overpass JSON envelope into an ElementSet.

    The snapshot time is taken from the envelope's osm3s timestamp when
    present (keeping reruns deterministic); otherwise the parse instant is
    used. Nodes without coordinates, elements missing edit metadata, and
    out-of-range values are rejected individually; a repeated (kind, id)
    keeps the last occurrence and bumps the duplicate counter.
    """
    text = _as_text(data)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"malformed JSON: {exc.msg}", location=f"byte offset {exc.pos}"
        ) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("elements"), list):
        raise ParseError("not an Overpass envelope: missing top-level 'elements' array")

    snapshot_time = datetime.now(timezone.utc)
    osm3s = doc.get("osm3s")
    if isinstance(osm3s, dict) and isinstance(osm3s.get("timestamp_osm_base"), str):
        try:
            snapshot_time = parse_utc_timestamp(osm3s["timestamp_osm_base"])
        except ValueError:
            log.warning("unparseable osm3s timestamp; using parse time")

    accepted: dict[tuple[ElementKind, int], OsmElement] = {}
    rejects: list[Reject] = []
    duplicates = 0
    for idx, raw in enumerate(doc["elements"]):
        where = f"elements[{idx}]"
        if not isinstance(raw, dict):
            rejects.append(Reject(where, "element is not an object"))
            continue
        try:
            kind = ElementKind(raw["type"])
            element_id = int(raw["id"])
        except (KeyError, ValueError, TypeError):
            rejects.append(Reject(where, "missing or invalid type/id"))
            continue
        missing_meta = [f for f in ("version", "timestamp", "user", "uid") if f not in raw]
        if missing_meta:
            rejects.append(
                Reject(where, f"missing metadata fields: {', '.join(missing_meta)}")
            )
            continue
        if kind is ElementKind.NODE and ("lat" not in raw or "lon" not in raw):
            rejects.append(Reject(where, "node without coordinates"))
            continue
        tags = raw.get("tags") or {}
        if not isinstance(tags, dict):
            rejects.append(Reject(where, "tags is not an object"))
            continue
        try:
            element = OsmElement(
                id=element_id,
                kind=kind,
                version=int(raw["version"]),
                timestamp=parse_utc_timestamp(str(raw["timestamp"])),
                user=str(raw["user"]),
                uid=int(raw["uid"]),
                tags={str(k): str(v) for k, v in tags.items()},
                lat=float(raw["lat"]) if kind is ElementKind.NODE else None,
                lon=float(raw["lon"]) if kind is ElementKind.NODE else None,
            )
        except (ValueError, TypeError) as exc:
            rejects.append(Reject(where, str(exc)))
            continue
        key = (kind, element_id)
        if key in accepted:
            duplicates += 1
        accepted[key] = element

    if duplicates:
        log.warning("parse_osm_json: %d duplicate (kind, id) pairs, last wins", duplicates)
    element_set = ElementSet(
        elements=tuple(accepted.values()),
        snapshot_time=snapshot_time,
        source=source,
    )
    return OsmParseResult(
        element_set=element_set,
        rejects=tuple(rejects),
        duplicate_count=duplicates,
    )


def serialize_osm_json(element_set: ElementSet) -> bytes:
    """Render an ElementSet back into the Overpass JSON envelope."""
    elements = []
    for e in element_set.elements:
        entry: dict = {
            "type": e.kind.value,
            "id": e.id,
        }
        if e.kind is ElementKind.NODE:
            entry["lat"] = e.lat
            entry["lon"] = e.lon
        entry["timestamp"] = format_utc_timestamp(e.timestamp)
        entry["version"] = e.version
        entry["user"] = e.user
        entry["uid"] = e.uid
        if e.tags:
            entry["tags"] = dict(e.tags)
        elements.append(entry)
    doc = {
        "version": 0.6,
        "generator": "crossaudit",
        "osm3s": {"timestamp_osm_base": format_utc_timestamp(element_set.snapshot_time)},
        "elements": elements,
    }
    return json.dumps(doc, ensure_ascii=False, indent=1).encode("utf-8")


def merge_element_sets(sets: Iterable[ElementSet]) -> tuple[ElementSet, int]:
    """Merge snapshots into one set; duplicate (kind, id) keeps the last.

    Returns the merged set (snapshot time = latest input) and the number
    of duplicates dropped.
    """
    merged: dict[tuple[ElementKind, int], OsmElement] = {}
    duplicates = 0
    snapshot_time: datetime | None = None
    source = Source.FILE
    for es in sets:
        source = es.source
        if snapshot_time is None or es.snapshot_time > snapshot_time:
            snapshot_time = es.snapshot_time
        for e in es.elements:
            key = (e.kind, e.id)
            if key in merged:
                duplicates += 1
            merged[key] = e
    if snapshot_time is None:
        raise ValueError("no element sets to merge")
    return (
        ElementSet(
            elements=tuple(merged.values()), snapshot_time=snapshot_time, source=source
        ),
        duplicates,
    )


def build_overpass_query(
    tag_key: str, tag_value: str, area_code: str, timeout_s: int = 180
) -> str:
    """Overpass QL for all nodes with one tag inside an ISO-3166 area.

    Subdivision codes (containing a dash, e.g. DE-BY) select areas by
    ISO3166-2, country codes by ISO3166-1. Meta output is always requested
    because every quality metric needs edit metadata.
    """
    if not tag_key or not tag_value or not area_code:
        raise ValueError("tag_key, tag_value, and area_code must be non-empty")
    if timeout_s <= 0:
        raise ValueError("timeout_s must be positive")
    area_key = "ISO3166-2" if "-" in area_code else "ISO3166-1"
    return OVERPASS_QUERY_TEMPLATE.format(
        timeout=timeout_s,
        area_key=area_key,
        area_value=area_code,
        key=tag_key,
        value=tag_value,
    )


def fetch_overpass(
    endpoint_url: str,
    query: str,
    retries: int = 3,
    *,
    backoff_base_s: float = 10.0,
    http_timeout_s: float | None = 600.0,
    session: requests.Session | None = None,
) -> OsmParseResult:
    """POST a query to an Overpass endpoint and parse the response.

    Retries HTTP 429/504 and network failures with exponential backoff
    (doubling from backoff_base_s) up to `retries` extra attempts, so at
    most retries+1 requests go out. Other non-2xx statuses raise
    ProtocolError immediately. The snapshot time is the response receipt
    time.
    """
    if retries < 0:
        raise ValueError("retries must be >= 0")
    url = endpoint_url.rstrip("/")
    if not url.endswith("/api/interpreter"):
        url = url + "/api/interpreter"
    http = session or requests
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt > 0:
            delay = backoff_base_s * 2 ** (attempt - 1)
            log.info("overpass retry %d/%d after %.1f s", attempt, retries, delay)
            time.sleep(delay)
        try:
            response = http.post(url, data={"data": query}, timeout=http_timeout_s)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code in (429, 504):
            last_error = ProtocolError(response.status_code, "overpass busy")
            continue
        if not 200 <= response.status_code < 300:
            raise ProtocolError(response.status_code, response.reason or "")
        received = datetime.now(timezone.utc)
        result = parse_osm_json(response.content, source=Source.OVERPASS)
        return OsmParseResult(
            element_set=replace(result.element_set, snapshot_time=received),
            rejects=result.rejects,
            duplicate_count=result.duplicate_count,
        )
    raise TransportError(
        f"overpass request failed after {retries + 1} attempts: {last_error}"
    )


def _load_feature_collection(data: bytes | str) -> list:
    try:
        doc = json.loads(_as_text(data))
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"malformed JSON: {exc.msg}", location=f"byte offset {exc.pos}"
        ) from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError("FeatureCollection without 'features' array")
    return features


def _ring_from_positions(positions) -> tuple[GeoPoint, ...]:
    ring = tuple(GeoPoint(lat=float(lat), lon=float(lon)) for lon, lat in positions)
    if len(ring) < 4:
        raise ValueError("ring has fewer than 4 positions")
    if ring[0] != ring[-1]:
        raise ValueError("unclosed ring")
    return ring


def _geometry_from_geojson(geometry: Mapping | None) -> Geometry | None:
    if geometry is None:
        return None
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Point":
        lon, lat = coords
        return PointGeom(GeoPoint(lat=float(lat), lon=float(lon)))
    if gtype == "Polygon":
        return PolygonGeom(tuple(_ring_from_positions(ring) for ring in coords))
    if gtype == "MultiPolygon":
        return MultiPolygonGeom(
            tuple(
                PolygonGeom(tuple(_ring_from_positions(ring) for ring in rings))
                for rings in coords
            )
        )
    raise ValueError(f"unsupported geometry type: {gtype}")


def parse_geojson_regions(data: bytes | str) -> RegionParseResult:
    """Regions from a FeatureCollection with region_id/name/level/area_km2.

    Optional census properties (catholic_share, protestant_share,
    population) are picked up when present. Features with broken rings or
    missing required properties go to the reject list.
    """
    regions: list[Region] = []
    rejects: list[Reject] = []
    for idx, feature in enumerate(_load_feature_collection(data)):
        where = f"features[{idx}]"
        props = feature.get("properties") or {}
        try:
            geometry = _geometry_from_geojson(feature.get("geometry"))
            if geometry is None or isinstance(geometry, PointGeom):
                raise ValueError("region geometry must be Polygon or MultiPolygon")
            census = None
            if "catholic_share" in props or "protestant_share" in props:
                census = Census(
                    catholic_share=float(props.get("catholic_share", 0.0)),
                    protestant_share=float(props.get("protestant_share", 0.0)),
                    population=(
                        int(props["population"]) if "population" in props else None
                    ),
                )
            region = Region(
                region_id=_nfc(str(props["region_id"])),
                name=_nfc(str(props["name"])),
                level=RegionLevel(props["level"]),
                geometry=geometry,
                area_km2=float(props["area_km2"]),
                census=census,
            )
        except (KeyError, ValueError, TypeError) as exc:
            reason = str(exc) if str(exc) else type(exc).__name__
            rejects.append(Reject(where, reason))
            continue
        regions.append(region)
    return RegionParseResult(regions=tuple(regions), rejects=tuple(rejects))


def parse_reference_features(data: bytes | str) -> ReferenceParseResult:
    """Reference register entries from a FeatureCollection.

    Features may carry a null geometry (entries without a location); those
    parse fine with has_location False and are skipped later by matching.
    """
    features: list[ReferenceFeature] = []
    rejects: list[Reject] = []
    for idx, feature in enumerate(_load_feature_collection(data)):
        where = f"features[{idx}]"
        props = feature.get("properties") or {}
        try:
            geometry = _geometry_from_geojson(feature.get("geometry"))
            ref = ReferenceFeature(
                ref_id=_nfc(str(props["ref_id"])),
                geometry=geometry,
                classification=Classification(props["classification"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            reason = str(exc) if str(exc) else type(exc).__name__
            rejects.append(Reject(where, reason))
            continue
        features.append(ref)
    return ReferenceParseResult(features=tuple(features), rejects=tuple(rejects))


CENSUS_HEADER = ["region_id", "name", "catholic_share", "protestant_share", "area_km2"]


def parse_census_csv(data: bytes | str) -> CensusParseResult:
    """Census rows from semicolon-separated CSV with the fixed header.

    Shares are fractions with decimal points. Rows with a missing
    region_id or unparseable numbers are rejected individually.
    """
    reader = csv.reader(io.StringIO(_as_text(data)), delimiter=";")
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty census file") from None
    if [h.strip() for h in header] != CENSUS_HEADER:
        raise ParseError(
            f"census header must be {';'.join(CENSUS_HEADER)}", location="line 1"
        )
    rows: dict[str, CensusRow] = {}
    rejects: list[Reject] = []
    for lineno, row in enumerate(reader, start=2):
        where = f"line {lineno}"
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CENSUS_HEADER):
            rejects.append(Reject(where, f"expected {len(CENSUS_HEADER)} fields"))
            continue
        region_id = row[0].strip()
        if not region_id:
            rejects.append(Reject(where, "missing region_id"))
            continue
        try:
            catholic = float(row[2])
            protestant = float(row[3])
            area = float(row[4])
            Census(catholic_share=catholic, protestant_share=protestant)
            if area <= 0:
                raise ValueError("area_km2 must be positive")
        except ValueError as exc:
            rejects.append(Reject(where, str(exc)))
            continue
        rows[region_id] = CensusRow(
            region_id=_nfc(region_id),
            name=_nfc(row[1].strip()),
            catholic_share=catholic,
            protestant_share=protestant,
            area_km2=area,
        )
    return CensusParseResult(rows=rows, rejects=tuple(rejects))


def attach_census(
    regions: Iterable[Region], rows: Mapping[str, CensusRow]
) -> tuple[list[Region], list[str]]:
    """Join census rows onto regions by region_id.

    Returns the updated regions (input order) and the ids of regions that
    had no census row. Regions keep their own area_km2; the census file's
    area column is informational.
    """
    updated: list[Region] = []
    missing: list[str] = []
    for region in regions:
        row = rows.get(region.region_id)
        if row is None:
            missing.append(region.region_id)
            updated.append(region)
            continue
        updated.append(
            replace(
                region,
                census=Census(
                    catholic_share=row.catholic_share,
                    protestant_share=row.protestant_share,
                    population=region.census.population if region.census else None,
                ),
            )
        )
    return updated, missing
