"""Completeness extrapolation from matching efficiencies or field densities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import DomainError

__all__ = [
    "EstimateMethod",
    "CountRange",
    "estimate_from_efficiency",
    "estimate_from_density",
    "combine_ranges",
    "round_sig",
]


class EstimateMethod(Enum):
    EFFICIENCY = "efficiency"
    DENSITY = "density"


@dataclass(frozen=True)
class CountRange:
    low: float
    high: float
    method: EstimateMethod

    def __post_init__(self) -> None:
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError("bounds must be finite")
        if self.low < 0:
            raise ValueError(f"low bound must be non-negative: {self.low}")
        if self.low > self.high:
            raise ValueError(f"low bound exceeds high bound: {self.low} > {self.high}")


def estimate_from_efficiency(
    mapped: int, eff_at_hi_radius: float, eff_at_lo_radius: float
) -> CountRange:
    """Total-count range implied by cumulative matching efficiencies.

    Efficiencies are cumulative in the radius, so the small-radius (hence
    smaller) efficiency divides into the upper bound and the large-radius
    one into the lower bound.
    """
    if eff_at_lo_radius <= 0.0:
        raise DomainError("cannot extrapolate from zero matches")
    if not eff_at_lo_radius <= eff_at_hi_radius <= 1.0:
        raise ValueError(
            "efficiencies must satisfy 0 < eff_lo_radius <= eff_hi_radius <= 1"
        )
    if mapped < 0:
        raise ValueError("mapped count must be non-negative")
    return CountRange(
        low=mapped / eff_at_hi_radius,
        high=mapped / eff_at_lo_radius,
        method=EstimateMethod.EFFICIENCY,
    )


def estimate_from_density(d_lo: float, d_hi: float, area_km2: float) -> CountRange:
    """Total-count range from a field-research density bracket."""
    if not 0.0 <= d_lo <= d_hi:
        raise ValueError("densities must satisfy 0 <= d_lo <= d_hi")
    if area_km2 <= 0.0:
        raise ValueError("area_km2 must be positive")
    return CountRange(
        low=d_lo * area_km2, high=d_hi * area_km2, method=EstimateMethod.DENSITY
    )


def combine_ranges(ranges: Iterable[CountRange]) -> CountRange:
    """Sum per-region ranges into one aggregate of the same method."""
    items = list(ranges)
    if not items:
        raise ValueError("no ranges to combine")
    methods = {r.method for r in items}
    if len(methods) > 1:
        raise ValueError("cannot combine ranges of different methods")
    return CountRange(
        low=sum(r.low for r in items),
        high=sum(r.high for r in items),
        method=items[0].method,
    )


def round_sig(value: float, digits: int = 2) -> float:
    """Round to a number of significant figures (for the human summary)."""
    if digits < 1:
        raise ValueError("digits must be >= 1")
    if value == 0 or not math.isfinite(value):
        return value
    magnitude = math.floor(math.log10(abs(value)))
    return round(value, -magnitude + digits - 1)
