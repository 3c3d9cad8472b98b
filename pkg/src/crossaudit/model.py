"""Core OSM domain types and the six cross-like tag categories.

Everything here is an immutable value object; the classification helpers
are pure functions of the element's tags.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .errors import DomainError

__all__ = [
    "ElementKind",
    "CrossCategory",
    "CATEGORY_ORDER",
    "META_KEYS",
    "OsmElement",
    "classify_element",
    "descriptive_tag_count",
    "parse_utc_timestamp",
    "format_utc_timestamp",
]


class ElementKind(Enum):
    NODE = "node"
    WAY = "way"
    RELATION = "relation"


class CrossCategory(Enum):
    """The six studied tag combinations, each defined by one key=value pair."""

    HWC = ("historic", "wayside_cross")
    HWS = ("historic", "wayside_shrine")
    MMC = ("man_made", "cross")
    MC = ("memorial", "cross")
    MTC = ("memorial:type", "cross")
    SMY = ("summit:cross", "yes")

    @property
    def key(self) -> str:
        return self.value[0]

    @property
    def tag_value(self) -> str:
        return self.value[1]


# Canonical display/emit order (table rows and columns follow it).
CATEGORY_ORDER: tuple[CrossCategory, ...] = tuple(CrossCategory)

# Keys that mirror edit metadata. They never count as descriptive content,
# even when a contributor stored them as ordinary tags.
META_KEYS = frozenset({"version", "id", "timestamp", "user", "uid", "changeset"})


def parse_utc_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 instant with Z suffix into an aware UTC datetime."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp lacks timezone: {value!r}")
    return dt.astimezone(timezone.utc)


def format_utc_timestamp(dt: datetime) -> str:
    """Render an aware datetime as the OSM-style ISO-8601 Z form."""
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class OsmElement:
    """One node, way, or relation with tags and last-edit metadata.

    Tags are NFC-normalized at construction so category predicates and
    key lookups are insensitive to encoder variance. Coordinates are
    mandatory for nodes and absent for ways/relations.
    """

    id: int
    kind: ElementKind
    version: int
    timestamp: datetime
    user: str
    uid: int
    tags: dict[str, str] = field(default_factory=dict)
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self) -> None:
        if self.version < 1:
            raise ValueError(f"version must be >= 1, got {self.version}")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware (UTC)")
        if self.kind is ElementKind.NODE:
            if self.lat is None or self.lon is None:
                raise ValueError(f"node {self.id} lacks coordinates")
            if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
                raise ValueError(f"node {self.id} has non-finite coordinates")
            if not -90.0 <= self.lat <= 90.0:
                raise ValueError(f"node {self.id} latitude out of range: {self.lat}")
            if not -180.0 <= self.lon <= 180.0:
                raise ValueError(f"node {self.id} longitude out of range: {self.lon}")
        normalized: dict[str, str] = {}
        for key, value in self.tags.items():
            nk = _nfc(key)
            if nk in normalized:
                raise ValueError(f"tag keys collide after NFC normalization: {key!r}")
            normalized[nk] = _nfc(value)
        object.__setattr__(self, "tags", normalized)
        object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))


def classify_element(element: OsmElement) -> set[CrossCategory]:
    """Return every category whose defining key=value pair is on the element.

    Membership is exact, case-sensitive string equality; an element may
    belong to several categories at once, and tag order never matters.
    """
    tags = element.tags
    return {cat for cat in CrossCategory if tags.get(cat.key) == cat.tag_value}


def descriptive_tag_count(element: OsmElement, category: CrossCategory) -> int:
    """Number of tags beyond the category's defining tag and any meta keys.

    Raises DomainError when the element is not in the category.
    """
    if element.tags.get(category.key) != category.tag_value:
        raise DomainError(
            f"element {element.kind.value}/{element.id} not in category {category.name}"
        )
    return sum(1 for k in element.tags if k != category.key and k not in META_KEYS)
