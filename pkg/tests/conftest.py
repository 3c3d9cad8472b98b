from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import pytest

from crossaudit.ingest import ElementSet, Source
from crossaudit.model import ElementKind, OsmElement

FIXTURES = Path(__file__).parent / "fixtures"


def make_node(
    node_id: int,
    tags: dict[str, str] | None = None,
    *,
    lat: float = 48.0,
    lon: float = 11.5,
    version: int = 1,
    timestamp: str = "2020-01-01T00:00:00Z",
    user: str = "alice",
    uid: int = 1,
) -> OsmElement:
    ts = datetime.fromisoformat(timestamp.replace("Z", "+00:00"))
    return OsmElement(
        id=node_id,
        kind=ElementKind.NODE,
        version=version,
        timestamp=ts,
        user=user,
        uid=uid,
        tags=tags or {},
        lat=lat,
        lon=lon,
    )


def make_way(
    way_id: int,
    tags: dict[str, str] | None = None,
    *,
    version: int = 1,
    timestamp: str = "2020-01-01T00:00:00Z",
    user: str = "alice",
    uid: int = 1,
) -> OsmElement:
    ts = datetime.fromisoformat(timestamp.replace("Z", "+00:00"))
    return OsmElement(
        id=way_id,
        kind=ElementKind.WAY,
        version=version,
        timestamp=ts,
        user=user,
        uid=uid,
        tags=tags or {},
    )


def make_element_set(elements, snapshot: str = "2023-05-23T00:00:00Z") -> ElementSet:
    ts = datetime.fromisoformat(snapshot.replace("Z", "+00:00"))
    return ElementSet(elements=tuple(elements), snapshot_time=ts, source=Source.FILE)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
