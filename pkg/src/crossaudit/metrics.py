"""Intrinsic quality indicators computed from tags and edit metadata."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError
from .model import (
    META_KEYS,
    CrossCategory,
    OsmElement,
    classify_element,
)

__all__ = [
    "AGE_HISTOGRAM_BIN_DAYS",
    "AgeStats",
    "InequalityStat",
    "CooccurrenceMatrix",
    "RichnessStats",
    "KeyCoverage",
    "cooccurrence_matrix",
    "age_stats",
    "version_histogram",
    "gini",
    "tag_richness",
    "key_coverage",
]

log = logging.getLogger(__name__)

# Matches the visible "waves of addition" granularity in the age plots.
AGE_HISTOGRAM_BIN_DAYS = 90.0

GroupBy = Callable[[OsmElement], "str | None"]


def _iter_elements(elements) -> list[OsmElement]:
    inner = getattr(elements, "elements", elements)
    return list(inner)


@dataclass(frozen=True)
class AgeStats:
    """Box-plot style summary of element ages (days since last change)."""

    group_id: str
    n: int
    median_days: float
    q1_days: float
    q3_days: float
    whisker_lo_days: float
    whisker_hi_days: float
    histogram: tuple[tuple[float, int], ...]


@dataclass(frozen=True)
class InequalityStat:
    gini: float
    n_contributors: int
    top_contributor_share: float


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Row-normalized joint membership counts between categories.

    fraction(a, b) is the share of a-elements that also carry b's defining
    tag: joint(a, b) / count(a). The diagonal is absent (None), as are all
    entries of rows whose category has no members.
    """

    categories: tuple[CrossCategory, ...]
    counts: dict[CrossCategory, int]
    joint: dict[tuple[CrossCategory, CrossCategory], int]

    def fraction(self, a: CrossCategory, b: CrossCategory) -> float | None:
        if a is b:
            return None
        denom = self.counts.get(a, 0)
        if denom == 0:
            return None
        key = (a, b) if a.name <= b.name else (b, a)
        return self.joint.get(key, 0) / denom

    def undefined_rows(self) -> tuple[CrossCategory, ...]:
        return tuple(c for c in self.categories if self.counts.get(c, 0) == 0)


@dataclass(frozen=True)
class RichnessStats:
    group_id: str
    n: int
    mean_descriptive_tags: float | None
    key_frequencies: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class KeyCoverage:
    coverage: float
    values: tuple[tuple[str, int], ...]


def cooccurrence_matrix(
    elements, categories: Sequence[CrossCategory]
) -> CooccurrenceMatrix:
    """Tag contamination table over whatever element set is passed in.

    Callers decide whether to pre-filter to nodes; the global contamination
    report deliberately runs on all element kinds.
    """
    cats = tuple(categories)
    if not cats:
        raise ValueError("categories must be non-empty")
    counts: dict[CrossCategory, int] = {c: 0 for c in cats}
    joint: dict[tuple[CrossCategory, CrossCategory], int] = {}
    cat_set = set(cats)
    for element in _iter_elements(elements):
        member = sorted(classify_element(element) & cat_set, key=lambda c: c.name)
        for c in member:
            counts[c] += 1
        for i, a in enumerate(member):
            for b in member[i + 1 :]:
                joint[(a, b)] = joint.get((a, b), 0) + 1
    return CooccurrenceMatrix(categories=cats, counts=counts, joint=joint)


def _quantile(data: np.ndarray, q: float) -> float:
    # Linear interpolation between order statistics at h = (n-1)*q.
    return float(np.quantile(data, q, method="linear"))


def age_stats(
    elements,
    reference_time: datetime,
    group_by: GroupBy | None = None,
    groups: Iterable[str] | None = None,
) -> list[AgeStats]:
    """Per-group age distribution summaries with 90-day histogram bins.

    Age is the time since the element's last change, in decimal days, with
    respect to reference_time (the snapshot date, not the wall clock).
    Elements stamped after reference_time are skipped with a warning.
    Whiskers extend to the farthest data point within 1.5 IQR of the box.
    """
    by_group: dict[str, list[float]] = {g: [] for g in (groups or [])}
    skipped = 0
    for element in _iter_elements(elements):
        age_days = (reference_time - element.timestamp).total_seconds() / 86400.0
        if age_days < 0:
            skipped += 1
            continue
        group = group_by(element) if group_by else "all"
        if group is None:
            continue
        by_group.setdefault(group, []).append(age_days)
    if skipped:
        log.warning("age_stats: skipped %d elements newer than reference time", skipped)

    out: list[AgeStats] = []
    for group_id in sorted(by_group):
        ages = by_group[group_id]
        if not ages:
            continue
        arr = np.asarray(ages, dtype=float)
        q1 = _quantile(arr, 0.25)
        med = _quantile(arr, 0.50)
        q3 = _quantile(arr, 0.75)
        iqr = q3 - q1
        lo_fence = q1 - 1.5 * iqr
        hi_fence = q3 + 1.5 * iqr
        whisker_lo = float(arr[arr >= lo_fence].min())
        whisker_hi = float(arr[arr <= hi_fence].max())
        n_bins = int(arr.max() // AGE_HISTOGRAM_BIN_DAYS) + 1
        histogram = tuple(
            (i * AGE_HISTOGRAM_BIN_DAYS, int(((arr >= i * AGE_HISTOGRAM_BIN_DAYS) & (arr < (i + 1) * AGE_HISTOGRAM_BIN_DAYS)).sum()))
            for i in range(n_bins)
        )
        out.append(
            AgeStats(
                group_id=group_id,
                n=len(ages),
                median_days=med,
                q1_days=q1,
                q3_days=q3,
                whisker_lo_days=whisker_lo,
                whisker_hi_days=whisker_hi,
                histogram=histogram,
            )
        )
    return out


def version_histogram(elements) -> dict[str, float]:
    """Share of elements per version bin; versions of 4 and above pool."""
    bins = {"1": 0, "2": 0, "3": 0, "4+": 0}
    total = 0
    for element in _iter_elements(elements):
        total += 1
        if element.version >= 4:
            bins["4+"] += 1
        else:
            bins[str(element.version)] += 1
    if total == 0:
        return {k: 0.0 for k in bins}
    return {k: v / total for k, v in bins.items()}


def gini(contribution_counts: Sequence[float]) -> InequalityStat:
    """Gini coefficient of per-contributor counts.

    Mean-absolute-difference normalization over all ordered pairs divided
    by 2*n*sum, computed via the sorted O(n log n) identity. Bounded by
    1 - 1/n, so extremely skewed data tops out just below one. Counts are
    usually integers but any non-negative scale works (the coefficient is
    scale-invariant).
    """
    counts = list(contribution_counts)
    if not counts:
        raise ValueError("contribution counts must be non-empty")
    if any(c < 0 for c in counts):
        raise ValueError("contribution counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise DomainError("all contribution counts are zero")
    n = len(counts)
    ordered = sorted(counts)
    weighted = sum((i + 1) * x for i, x in enumerate(ordered))
    g = 2.0 * weighted / (n * total) - (n + 1) / n
    g = max(0.0, g)
    return InequalityStat(
        gini=g,
        n_contributors=n,
        top_contributor_share=max(counts) / total,
    )


def _descriptive_keys(element: OsmElement, category: CrossCategory) -> list[str]:
    return [k for k in element.tags if k != category.key and k not in META_KEYS]


def tag_richness(
    elements,
    category: CrossCategory,
    group_by: GroupBy | None = None,
    groups: Iterable[str] | None = None,
) -> list[RichnessStats]:
    """Mean descriptive-tag count and per-key usage shares per group.

    Only elements belonging to the category contribute. Key frequencies are
    the share of the group's elements carrying each descriptive key, ranked
    by descending share with lexicographic tie-break.
    """
    member_groups: dict[str, list[OsmElement]] = {g: [] for g in (groups or [])}
    for element in _iter_elements(elements):
        if element.tags.get(category.key) != category.tag_value:
            continue
        group = group_by(element) if group_by else "all"
        if group is None:
            continue
        member_groups.setdefault(group, []).append(element)

    out: list[RichnessStats] = []
    for group_id in sorted(member_groups):
        members = member_groups[group_id]
        if not members:
            out.append(
                RichnessStats(
                    group_id=group_id, n=0, mean_descriptive_tags=None, key_frequencies=()
                )
            )
            continue
        key_counts: dict[str, int] = {}
        total_tags = 0
        for element in members:
            keys = _descriptive_keys(element, category)
            total_tags += len(keys)
            for k in keys:
                key_counts[k] = key_counts.get(k, 0) + 1
        n = len(members)
        frequencies = tuple(
            (k, key_counts[k] / n)
            for k in sorted(key_counts, key=lambda k: (-key_counts[k], k))
        )
        out.append(
            RichnessStats(
                group_id=group_id,
                n=n,
                mean_descriptive_tags=total_tags / n,
                key_frequencies=frequencies,
            )
        )
    return out


def key_coverage(elements, key: str) -> KeyCoverage:
    """Share of elements carrying a key, with its value histogram.

    Values rank by descending count, ties by lexicographic value.
    """
    values: dict[str, int] = {}
    total = 0
    carrying = 0
    for element in _iter_elements(elements):
        total += 1
        value = element.tags.get(key)
        if value is not None:
            carrying += 1
            values[value] = values.get(value, 0) + 1
    histogram = tuple(
        (v, values[v]) for v in sorted(values, key=lambda v: (-values[v], v))
    )
    return KeyCoverage(
        coverage=(carrying / total) if total else 0.0,
        values=histogram,
    )
