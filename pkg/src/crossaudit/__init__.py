"""Coverage, richness, and quality analytics for niche-tag OSM data."""

from .errors import (
    ConfigError,
    CrossAuditError,
    DomainError,
    ParseError,
    ProtocolError,
    TransportError,
)
from .estimate import CountRange, EstimateMethod, estimate_from_density, estimate_from_efficiency
from .fitting import LogisticParams, fit_logistic, logistic
from .geo import GeoPoint, build_spatial_index, haversine_distance, nearest_within
from .ingest import ElementSet, Region, ReferenceFeature, parse_osm_json
from .matching import MatchCurve, MatchResult, bin_table, match_references, matching_curve
from .metrics import cooccurrence_matrix, gini, key_coverage, version_histogram
from .model import CrossCategory, OsmElement, classify_element, descriptive_tag_count
from .text import lemma_frequencies, pos_distance, tokenize

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CrossAuditError",
    "ConfigError",
    "ParseError",
    "TransportError",
    "ProtocolError",
    "DomainError",
    "OsmElement",
    "CrossCategory",
    "classify_element",
    "descriptive_tag_count",
    "ElementSet",
    "Region",
    "ReferenceFeature",
    "parse_osm_json",
    "GeoPoint",
    "haversine_distance",
    "build_spatial_index",
    "nearest_within",
    "cooccurrence_matrix",
    "gini",
    "version_histogram",
    "key_coverage",
    "MatchResult",
    "MatchCurve",
    "match_references",
    "matching_curve",
    "bin_table",
    "LogisticParams",
    "logistic",
    "fit_logistic",
    "CountRange",
    "EstimateMethod",
    "estimate_from_efficiency",
    "estimate_from_density",
    "tokenize",
    "lemma_frequencies",
    "pos_distance",
]
