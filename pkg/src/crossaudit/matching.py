"""Conflation of an external reference register against OSM nodes."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geo import (
    DEFAULT_CELL_SIZE_DEG,
    build_spatial_index,
    GeoPoint,
    nearest_within,
    point_in_region,
    polygon_centroid,
)
from .ingest import Classification, ElementSet, ReferenceFeature, Region
from .model import CrossCategory, ElementKind, OsmElement, classify_element

__all__ = [
    "DEFAULT_CUTOFF_M",
    "MATCH_CATEGORIES",
    "MatchResult",
    "MatchCurve",
    "MatchOutcome",
    "match_category_nodes",
    "match_references",
    "matching_curve",
    "bin_table",
    "matches_to_csv",
]

DEFAULT_CUTOFF_M = 500.0

# Node categories the register is compared against. The memorial:type
# variant is too rare and ill-defined to be part of the match target.
MATCH_CATEGORIES = frozenset(
    {
        CrossCategory.HWC,
        CrossCategory.HWS,
        CrossCategory.MMC,
        CrossCategory.MC,
        CrossCategory.SMY,
    }
)

DEFAULT_REFERENCE_CLASSES = frozenset(
    {Classification.CLEARLY_CROSS, Classification.UNCLEAR}
)


@dataclass(frozen=True)
class MatchResult:
    ref_id: str
    matched: bool
    node_id: int | None = None
    distance_m: float | None = None
    region_id: str | None = None

    def __post_init__(self) -> None:
        if self.matched != (self.node_id is not None and self.distance_m is not None):
            raise ValueError("matched must coincide with node_id/distance_m presence")


@dataclass(frozen=True)
class MatchCurve:
    """Cumulative share of references matched within increasing radii."""

    radii_m: tuple[float, ...]
    cumulative_fraction: tuple[float, ...]
    n_references: int


@dataclass(frozen=True)
class MatchOutcome:
    results: tuple[MatchResult, ...]
    skipped_no_location: int
    excluded_classification: int
    cutoff_m: float


def match_category_nodes(
    elements: ElementSet | Iterable[OsmElement],
    categories: frozenset[CrossCategory] = MATCH_CATEGORIES,
) -> list[OsmElement]:
    """Nodes belonging to any of the given categories (for index building)."""
    inner = getattr(elements, "elements", elements)
    return [
        e
        for e in inner
        if e.kind is ElementKind.NODE and classify_element(e) & categories
    ]


def match_references(
    refs: Sequence[ReferenceFeature],
    nodes: ElementSet | Iterable[OsmElement],
    cutoff_m: float = DEFAULT_CUTOFF_M,
    *,
    regions: Sequence[Region] | None = None,
    include_classifications: frozenset[Classification] = DEFAULT_REFERENCE_CLASSES,
    cell_size_deg: float = DEFAULT_CELL_SIZE_DEG,
) -> MatchOutcome:
    """Pair every reference with its nearest OSM node within the cutoff.

    Each reference independently takes the globally nearest node over the
    supplied node set (several references may share one node). Finding the
    per-category nearest first and then the overall minimum would select
    the same node, so a single nearest-neighbor query suffices. Results
    keep the input order; references without a location or with an
    excluded classification are skipped and counted.
    """
    node_list = list(getattr(nodes, "elements", nodes))
    index = build_spatial_index(
        ((e.id, GeoPoint(lat=e.lat, lon=e.lon)) for e in node_list),
        cell_size_deg=cell_size_deg,
    )

    results: list[MatchResult] = []
    skipped_no_location = 0
    excluded = 0
    for ref in refs:
        if ref.classification not in include_classifications:
            excluded += 1
            continue
        if not ref.has_location:
            skipped_no_location += 1
            continue
        centroid = polygon_centroid(ref.geometry)
        region_id = None
        if regions:
            for region in regions:
                if point_in_region(centroid, region):
                    region_id = region.region_id
                    break
        hit = nearest_within(index, centroid, cutoff_m)
        if hit is None:
            results.append(
                MatchResult(ref_id=ref.ref_id, matched=False, region_id=region_id)
            )
        else:
            node_id, distance = hit
            results.append(
                MatchResult(
                    ref_id=ref.ref_id,
                    matched=True,
                    node_id=node_id,
                    distance_m=distance,
                    region_id=region_id,
                )
            )
    return MatchOutcome(
        results=tuple(results),
        skipped_no_location=skipped_no_location,
        excluded_classification=excluded,
        cutoff_m=cutoff_m,
    )


def matching_curve(
    results: Sequence[MatchResult], radii_m: Sequence[float]
) -> MatchCurve:
    """Cumulative matching efficiency at each radius.

    The denominator is every located reference, matched or not, so the
    curve tops out at one minus the unmatched share.
    """
    if not results:
        raise ValueError("no match results")
    radii = tuple(float(r) for r in radii_m)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly ascending")
    n = len(results)
    distances = sorted(r.distance_m for r in results if r.matched)
    fractions = []
    i = 0
    for radius in radii:
        while i < len(distances) and distances[i] <= radius:
            i += 1
        fractions.append(i / n)
    return MatchCurve(
        radii_m=radii, cumulative_fraction=tuple(fractions), n_references=n
    )


def bin_table(
    results: Sequence[MatchResult], edges_m: Sequence[float] = (30.0, 50.0, 150.0)
) -> list[float]:
    """Shares of references per distance bin, the last bin catching
    everything beyond the final edge including unmatched references.

    The first bin is closed at zero, so exact-location matches land in it.
    Shares sum to one.
    """
    if not results:
        raise ValueError("no match results")
    edges = [float(e) for e in edges_m]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be strictly ascending")
    counts = [0] * (len(edges) + 1)
    for result in results:
        if not result.matched:
            counts[-1] += 1
            continue
        for i, edge in enumerate(edges):
            if result.distance_m <= edge:
                counts[i] += 1
                break
        else:
            counts[-1] += 1
    n = len(results)
    return [c / n for c in counts]


def matches_to_csv(results: Sequence[MatchResult]) -> str:
    """Render match results as CSV (ref_id,matched,node_id,distance_m,region_id)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["ref_id", "matched", "node_id", "distance_m", "region_id"])
    for r in results:
        writer.writerow(
            [
                r.ref_id,
                "true" if r.matched else "false",
                "" if r.node_id is None else r.node_id,
                "" if r.distance_m is None else repr(r.distance_m),
                r.region_id or "",
            ]
        )
    return buffer.getvalue()
