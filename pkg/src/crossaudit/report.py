"""Pipeline orchestration: config, section assembly, report and CSV output.

Everything emitted here is deterministic for identical inputs: section
dictionaries contain only plain Python values, JSON is dumped with sorted
keys, and all orderings are fixed (category declaration order, region
input order, lexicographic tie-breaks).
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from . import estimate as est
from . import fitting, matching, metrics, text as text_mod
from .errors import ConfigError, CrossAuditError, DomainError
from .geo import GeoPoint, geometry_bounds, point_in_region
from .ingest import (
    ElementSet,
    Region,
    Source,
    attach_census,
    build_overpass_query,
    fetch_overpass,
    merge_element_sets,
    parse_census_csv,
    parse_geojson_regions,
    parse_osm_json,
    parse_reference_features,
    serialize_osm_json,
)
from .model import (
    CATEGORY_ORDER,
    CrossCategory,
    ElementKind,
    OsmElement,
    classify_element,
    format_utc_timestamp,
)

__all__ = ["RunConfig", "QualityReport", "load_config", "run_pipeline", "write_outputs"]

log = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "CROSSAUDIT_OVERPASS_ENDPOINT"

DEFAULT_RADII_M = [float(r) for r in range(1, 501)]
DEFAULT_BIN_EDGES_M = [30.0, 50.0, 150.0]
DEFAULT_ESTIMATE_RADII_M = [50.0, 150.0]
DEFAULT_COVERAGE_KEYS = ["material", "religion"]
DEFAULT_TEXT_KEYS = ["name", "inscription"]

_KNOWN_CONFIG_KEYS = {
    "output_dir",
    "overpass_endpoint",
    "snapshot_paths",
    "fetch_area_code",
    "overpass_timeout_s",
    "retries",
    "workers",
    "categories",
    "focus_category",
    "regions_path",
    "census_path",
    "references_path",
    "lexicon_path",
    "corpora_paths",
    "tagged_value_paths",
    "text_keys",
    "coverage_keys",
    "cutoff_m",
    "radii_m",
    "bin_edges_m",
    "estimate_radii_m",
    "estimate_statewide",
    "field_density",
    "comparison_snapshot_paths",
    "comparison_label",
    "length_split_at",
}


@dataclass
class RunConfig:
    """Validated run configuration; paths are resolved and absolute."""

    output_dir: Path
    overpass_endpoint: str | None = None
    snapshot_paths: list[Path] = field(default_factory=list)
    fetch_area_code: str | None = None
    overpass_timeout_s: int = 180
    retries: int = 3
    workers: int = 2
    categories: list[CrossCategory] = field(default_factory=lambda: list(CATEGORY_ORDER))
    focus_category: CrossCategory = CrossCategory.HWC
    regions_path: Path | None = None
    census_path: Path | None = None
    references_path: Path | None = None
    lexicon_path: Path | None = None
    corpora_paths: dict[str, Path] = field(default_factory=dict)
    tagged_value_paths: dict[str, Path] = field(default_factory=dict)
    text_keys: list[str] = field(default_factory=lambda: list(DEFAULT_TEXT_KEYS))
    coverage_keys: list[str] = field(default_factory=lambda: list(DEFAULT_COVERAGE_KEYS))
    cutoff_m: float = matching.DEFAULT_CUTOFF_M
    radii_m: list[float] = field(default_factory=lambda: list(DEFAULT_RADII_M))
    bin_edges_m: list[float] = field(default_factory=lambda: list(DEFAULT_BIN_EDGES_M))
    estimate_radii_m: list[float] = field(
        default_factory=lambda: list(DEFAULT_ESTIMATE_RADII_M)
    )
    estimate_statewide: bool = False
    field_density: dict[str, Any] | None = None
    comparison_snapshot_paths: list[Path] = field(default_factory=list)
    comparison_label: str = "comparison"
    length_split_at: int = text_mod.DEFAULT_LENGTH_SPLIT
    # text analytics only run when the config asked for them
    text_inputs_configured: bool = True


@dataclass
class QualityReport:
    """The assembled report: one entry per section plus diagnostics."""

    sections: dict[str, Any]
    diagnostics: dict[str, Any]
    csv_files: dict[str, str]

    def to_json(self) -> str:
        doc = dict(self.sections)
        doc["diagnostics"] = self.diagnostics
        return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n"

    @property
    def partial(self) -> bool:
        return bool(self.diagnostics)


def _category(name: str) -> CrossCategory:
    try:
        return CrossCategory[name]
    except KeyError:
        raise ConfigError(f"unknown category: {name!r}") from None


def load_config(path: str | Path, *, output_dir_override: str | None = None) -> RunConfig:
    """Read and validate a JSON run configuration.

    Relative paths resolve against the config file's directory. The
    CROSSAUDIT_OVERPASS_ENDPOINT environment variable overrides the
    configured endpoint. Either an endpoint or snapshot files must be
    present, checked here so misconfiguration fails before any network or
    file work starts.
    """
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    base = config_path.parent

    def resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (base / p).resolve()

    def resolve_list(key: str) -> list[Path]:
        items = raw.get(key) or []
        if not isinstance(items, list):
            raise ConfigError(f"{key} must be a list of paths")
        return [resolve(str(v)) for v in items]

    def resolve_map(key: str) -> dict[str, Path]:
        items = raw.get(key) or {}
        if not isinstance(items, dict):
            raise ConfigError(f"{key} must be a map of label to path")
        return {str(k): resolve(str(v)) for k, v in items.items()}

    endpoint = os.environ.get(ENDPOINT_ENV_VAR) or raw.get("overpass_endpoint")
    snapshot_paths = resolve_list("snapshot_paths")
    if not endpoint and not snapshot_paths:
        raise ConfigError("config needs overpass_endpoint or snapshot_paths")

    output_dir_raw = output_dir_override or raw.get("output_dir")
    if not output_dir_raw:
        raise ConfigError("config needs output_dir (or pass --out)")
    output_dir = (
        Path(output_dir_raw)
        if Path(output_dir_raw).is_absolute() or output_dir_override
        else (base / output_dir_raw).resolve()
    )
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        probe = output_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output_dir not writable: {exc}") from None

    categories = [_category(c) for c in raw.get("categories") or [c.name for c in CATEGORY_ORDER]]
    if not categories:
        raise ConfigError("categories must be non-empty")
    focus = _category(raw.get("focus_category", "HWC"))

    config = RunConfig(
        output_dir=output_dir,
        overpass_endpoint=endpoint,
        snapshot_paths=snapshot_paths,
        fetch_area_code=raw.get("fetch_area_code"),
        overpass_timeout_s=int(raw.get("overpass_timeout_s", 180)),
        retries=int(raw.get("retries", 3)),
        workers=int(raw.get("workers", 2)),
        categories=categories,
        focus_category=focus,
        regions_path=resolve(raw["regions_path"]) if raw.get("regions_path") else None,
        census_path=resolve(raw["census_path"]) if raw.get("census_path") else None,
        references_path=(
            resolve(raw["references_path"]) if raw.get("references_path") else None
        ),
        lexicon_path=resolve(raw["lexicon_path"]) if raw.get("lexicon_path") else None,
        corpora_paths=resolve_map("corpora_paths"),
        tagged_value_paths=resolve_map("tagged_value_paths"),
        text_keys=[str(k) for k in raw.get("text_keys", DEFAULT_TEXT_KEYS)],
        coverage_keys=[str(k) for k in raw.get("coverage_keys", DEFAULT_COVERAGE_KEYS)],
        cutoff_m=float(raw.get("cutoff_m", matching.DEFAULT_CUTOFF_M)),
        radii_m=[float(r) for r in raw.get("radii_m", DEFAULT_RADII_M)],
        bin_edges_m=[float(e) for e in raw.get("bin_edges_m", DEFAULT_BIN_EDGES_M)],
        estimate_radii_m=[
            float(r) for r in raw.get("estimate_radii_m", DEFAULT_ESTIMATE_RADII_M)
        ],
        estimate_statewide=bool(raw.get("estimate_statewide", False)),
        field_density=raw.get("field_density"),
        comparison_snapshot_paths=resolve_list("comparison_snapshot_paths"),
        comparison_label=str(raw.get("comparison_label", "comparison")),
        length_split_at=int(raw.get("length_split_at", text_mod.DEFAULT_LENGTH_SPLIT)),
        text_inputs_configured=any(
            key in raw
            for key in (
                "lexicon_path",
                "corpora_paths",
                "tagged_value_paths",
                "text_keys",
                "length_split_at",
            )
        ),
    )
    if config.workers < 1:
        raise ConfigError("workers must be >= 1")
    if config.cutoff_m <= 0:
        raise ConfigError("cutoff_m must be positive")
    if sorted(config.radii_m) != config.radii_m or len(set(config.radii_m)) != len(config.radii_m):
        raise ConfigError("radii_m must be strictly ascending")
    if config.radii_m and config.radii_m[-1] > config.cutoff_m:
        raise ConfigError("max radius must not exceed the cutoff")
    if config.field_density is not None:
        needed = {"d_lo", "d_hi", "area_km2"}
        if not needed <= set(config.field_density):
            raise ConfigError("field_density needs d_lo, d_hi, area_km2")
    return config


# ---------------------------------------------------------------------------
# pipeline state shared between sections


@dataclass
class _PipelineState:
    config: RunConfig
    element_set: ElementSet
    regions: list[Region]
    region_of: Callable[[OsmElement], str | None]
    diagnostics: dict[str, Any]

    def focus_nodes(self) -> list[OsmElement]:
        focus = self.config.focus_category
        return [
            e
            for e in self.element_set.nodes()
            if e.tags.get(focus.key) == focus.tag_value
        ]


def _region_assigner(regions: list[Region]) -> Callable[[GeoPoint], str | None]:
    bounds = [geometry_bounds(r.geometry) for r in regions]

    def assign(point: GeoPoint) -> str | None:
        for region, (lat_lo, lon_lo, lat_hi, lon_hi) in zip(regions, bounds):
            if not (lat_lo <= point.lat <= lat_hi and lon_lo <= point.lon <= lon_hi):
                continue
            if point_in_region(point, region):
                return region.region_id
        return None

    return assign


def fetch_snapshots(config: RunConfig) -> dict[CrossCategory, Path]:
    """Fetch one snapshot file per configured category from Overpass.

    Fetches run on a bounded worker pool (default two, per Overpass
    fair-use). Files land in the output directory and are immediately
    reusable as snapshot_paths.
    """
    if not config.overpass_endpoint:
        raise ConfigError("fetching needs overpass_endpoint (config or env)")
    if not config.fetch_area_code:
        raise ConfigError("fetching needs fetch_area_code")

    def fetch_one(cat: CrossCategory) -> tuple[CrossCategory, Path]:
        query = build_overpass_query(
            cat.key, cat.tag_value, config.fetch_area_code, config.overpass_timeout_s
        )
        result = fetch_overpass(
            config.overpass_endpoint, query, retries=config.retries
        )
        path = config.output_dir / f"snapshot_{cat.name.lower()}.json"
        path.write_bytes(serialize_osm_json(result.element_set))
        return cat, path

    out: dict[CrossCategory, Path] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as pool:
        for cat, path in pool.map(fetch_one, config.categories):
            out[cat] = path
    return out


def _load_elements(config: RunConfig, diagnostics: dict[str, Any]) -> ElementSet:
    if config.snapshot_paths:
        parsed = []
        reject_count = 0
        duplicate_count = 0
        for path in config.snapshot_paths:
            result = parse_osm_json(path.read_bytes(), source=Source.FILE)
            parsed.append(result.element_set)
            reject_count += len(result.rejects)
            duplicate_count += result.duplicate_count
        merged, merge_dups = merge_element_sets(parsed)
        duplicate_count += merge_dups
        if reject_count:
            diagnostics.setdefault("rejects", {})["osm_elements"] = reject_count
        if duplicate_count:
            diagnostics["duplicate_elements"] = duplicate_count
        return merged
    snapshots = fetch_snapshots(config)
    sets = []
    for path in snapshots.values():
        sets.append(parse_osm_json(path.read_bytes(), source=Source.OVERPASS).element_set)
    merged, _ = merge_element_sets(sets)
    return merged


def _load_regions(config: RunConfig, diagnostics: dict[str, Any]) -> list[Region]:
    if not config.regions_path:
        return []
    result = parse_geojson_regions(config.regions_path.read_bytes())
    if result.rejects:
        diagnostics.setdefault("rejects", {})["regions"] = len(result.rejects)
    regions = list(result.regions)
    if config.census_path:
        census = parse_census_csv(config.census_path.read_bytes())
        if census.rejects:
            diagnostics.setdefault("rejects", {})["census_rows"] = len(census.rejects)
        regions, missing = attach_census(regions, census.rows)
        if missing:
            diagnostics["regions_without_census"] = sorted(missing)
    return regions


# ---------------------------------------------------------------------------
# section builders


def _counts_section(element_set: ElementSet, categories: list[CrossCategory]) -> dict:
    per_category: dict[str, dict] = {}
    union_elements = 0
    union_nodes = 0
    for cat in categories:
        members = [
            e for e in element_set.elements if e.tags.get(cat.key) == cat.tag_value
        ]
        nodes = sum(1 for e in members if e.kind is ElementKind.NODE)
        per_category[cat.name] = {
            "elements": len(members),
            "nodes": nodes,
            "non_node_share": (len(members) - nodes) / len(members) if members else None,
        }
    cat_set = set(categories)
    for e in element_set.elements:
        if classify_element(e) & cat_set:
            union_elements += 1
            if e.kind is ElementKind.NODE:
                union_nodes += 1
    return {
        "total_elements": len(element_set.elements),
        "nodes": len(element_set.nodes()),
        "per_category": per_category,
        "non_node_share_global": (
            (union_elements - union_nodes) / union_elements if union_elements else None
        ),
    }


def _contamination_section(element_set: ElementSet, categories: list[CrossCategory]) -> dict:
    matrix = metrics.cooccurrence_matrix(element_set.elements, categories)
    table: dict[str, dict[str, float | None]] = {}
    for a in categories:
        table[a.name] = {b.name: matrix.fraction(a, b) for b in categories}
    return {
        "categories": [c.name for c in categories],
        "counts": {c.name: matrix.counts[c] for c in categories},
        "matrix": table,
        "undefined_rows": [c.name for c in matrix.undefined_rows()],
    }


def _age_group_dict(stats: metrics.AgeStats) -> dict:
    return {
        "group_id": stats.group_id,
        "n": stats.n,
        "median_days": stats.median_days,
        "q1_days": stats.q1_days,
        "q3_days": stats.q3_days,
        "whisker_lo_days": stats.whisker_lo_days,
        "whisker_hi_days": stats.whisker_hi_days,
        "histogram": [[start, count] for start, count in stats.histogram],
    }


def _quality_metrics(
    nodes: list[OsmElement],
    element_set: ElementSet,
    region_of: Callable[[OsmElement], str | None],
    grouped: bool,
) -> tuple[dict, int]:
    """Age, version, contributor, richness building blocks over focus nodes.

    Returns the partial section dict (without richness/key coverage, which
    need category context) and the count of elements newer than the
    snapshot.
    """
    reference_time = element_set.snapshot_time
    group_by = region_of if grouped else None

    late = sum(1 for e in nodes if e.timestamp > reference_time)
    age_groups = metrics.age_stats(nodes, reference_time, group_by=group_by)

    by_group: dict[str, list[OsmElement]] = {}
    for e in nodes:
        group = region_of(e) if grouped else "all"
        if group is None:
            continue
        by_group.setdefault(group, []).append(e)

    versions = {
        group: metrics.version_histogram(members)
        for group, members in sorted(by_group.items())
    }

    contributors = []
    for group in sorted(by_group):
        members = by_group[group]
        counts: dict[int, int] = {}
        for e in members:
            counts[e.uid] = counts.get(e.uid, 0) + 1
        if not counts:
            continue
        stat = metrics.gini(sorted(counts.values()))
        contributors.append(
            {
                "group_id": group,
                "n_contributors": stat.n_contributors,
                "gini": stat.gini,
                "top_contributor_share": stat.top_contributor_share,
            }
        )

    section = {
        "age": {
            "reference_time": format_utc_timestamp(reference_time),
            "groups": [_age_group_dict(s) for s in age_groups],
        },
        "versions": versions,
        "contributors": contributors,
    }
    return section, late


def _quality_section(state: _PipelineState) -> dict:
    config = state.config
    nodes = state.focus_nodes()
    grouped = bool(state.regions)
    section, late = _quality_metrics(nodes, state.element_set, state.region_of, grouped)
    if late:
        state.diagnostics["late_timestamps"] = late

    groups = [r.region_id for r in state.regions] if grouped else None
    richness = metrics.tag_richness(
        nodes,
        config.focus_category,
        group_by=state.region_of if grouped else None,
        groups=groups,
    )
    section["richness"] = [
        {
            "group_id": r.group_id,
            "n": r.n,
            "mean_descriptive_tags": r.mean_descriptive_tags,
            "key_frequencies": [[k, share] for k, share in r.key_frequencies],
        }
        for r in richness
    ]
    section["key_coverage"] = {
        key: {
            "coverage": metrics.key_coverage(nodes, key).coverage,
            "values": [[v, c] for v, c in metrics.key_coverage(nodes, key).values],
        }
        for key in config.coverage_keys
    }

    unassigned = (
        sum(1 for e in nodes if state.region_of(e) is None) if grouped else 0
    )
    if unassigned:
        state.diagnostics["unassigned_focus_nodes"] = unassigned
    return section


def _matching_section(state: _PipelineState) -> tuple[dict, matching.MatchOutcome]:
    config = state.config
    refs = parse_reference_features(config.references_path.read_bytes())
    if refs.rejects:
        state.diagnostics.setdefault("rejects", {})["references"] = len(refs.rejects)

    nodes = matching.match_category_nodes(state.element_set)
    outcome = matching.match_references(
        refs.features,
        nodes,
        cutoff_m=config.cutoff_m,
        regions=state.regions or None,
    )
    if not outcome.results:
        raise DomainError("no located references to match")
    curve = matching.matching_curve(outcome.results, config.radii_m)
    bins = matching.bin_table(outcome.results, config.bin_edges_m)

    by_region: dict[str, list[matching.MatchResult]] = {}
    for result in outcome.results:
        if result.region_id is not None:
            by_region.setdefault(result.region_id, []).append(result)

    efficiency_radii = sorted(set(config.estimate_radii_m) | set(config.bin_edges_m))
    per_region = {}
    per_region_curves = {}
    for region_id in sorted(by_region):
        results = by_region[region_id]
        eff_curve = matching.matching_curve(results, efficiency_radii)
        per_region[region_id] = {
            "n_references": len(results),
            "efficiencies": {
                _radius_key(r): f
                for r, f in zip(eff_curve.radii_m, eff_curve.cumulative_fraction)
            },
        }
        region_curve = matching.matching_curve(results, config.radii_m)
        per_region_curves[region_id] = list(region_curve.cumulative_fraction)

    overall = matching.matching_curve(outcome.results, efficiency_radii)
    section = {
        "cutoff_m": config.cutoff_m,
        "n_references": curve.n_references,
        "n_matched": sum(1 for r in outcome.results if r.matched),
        "skipped_no_location": outcome.skipped_no_location,
        "excluded_classification": outcome.excluded_classification,
        "curve": {
            "radii_m": list(curve.radii_m),
            "cumulative_fraction": list(curve.cumulative_fraction),
        },
        "per_region_curves": per_region_curves,
        "bins": {"edges_m": list(config.bin_edges_m), "shares": bins},
        "per_region_efficiency": per_region,
        "overall_efficiency": {
            _radius_key(r): f
            for r, f in zip(overall.radii_m, overall.cumulative_fraction)
        },
    }
    return section, outcome


def _radius_key(radius: float) -> str:
    return f"{radius:g}m"


def _fitting_section(state: _PipelineState) -> dict:
    config = state.config
    result = fitting.densities_by_region(
        state.element_set, state.regions, set(config.categories)
    )
    if result.regions_without_census:
        state.diagnostics["density_regions_without_census"] = list(
            result.regions_without_census
        )
    if result.unassigned_nodes:
        state.diagnostics["density_unassigned_nodes"] = result.unassigned_nodes

    section: dict[str, Any] = {
        "n_regions": len(result.rows),
        "rows": [
            {
                "region_id": r.region_id,
                "count": r.count,
                "density": r.density,
                "catholic_share_pct": r.catholic_share_pct,
            }
            for r in result.rows
        ],
    }
    points = [(r.catholic_share_pct, r.density) for r in result.rows]
    try:
        fit = fitting.fit_logistic(points)
    except (ValueError, DomainError) as exc:
        section["fit"] = {"skipped": str(exc)}
        return section
    interval = fitting.rise_interval(fit.params)
    section["fit"] = {
        "a": fit.params.a,
        "k": fit.params.k,
        "x0": fit.params.x0,
        "b": fit.params.b,
        "rmse": fit.rmse,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
        "rise_interval": list(interval) if interval else None,
    }
    xs = [p[0] for p in points]
    section["curve_samples"] = [
        [x, y] for x, y in fitting.sample_curve(fit.params, min(xs), max(xs), n=101)
    ]
    return section


def _estimates_section(
    state: _PipelineState, matching_section: dict | None
) -> dict:
    config = state.config
    section: dict[str, Any] = {}

    if matching_section is None or "skipped" in matching_section:
        section["efficiency"] = {"skipped": "matching section unavailable"}
    else:
        radii = sorted(config.estimate_radii_m)
        lo_key, hi_key = _radius_key(radii[0]), _radius_key(radii[-1])
        nodes = state.focus_nodes()
        mapped_by_region: dict[str, int] = {}
        for e in nodes:
            region = state.region_of(e)
            if region is not None:
                mapped_by_region[region] = mapped_by_region.get(region, 0) + 1

        per_region: dict[str, Any] = {}
        skipped_regions: dict[str, str] = {}
        ranges = []
        if config.estimate_statewide:
            per_eff = {
                "statewide": {
                    "n_references": matching_section["n_references"],
                    "efficiencies": matching_section["overall_efficiency"],
                }
            }
            mapped_by_region = {"statewide": len(nodes)}
        else:
            per_eff = matching_section["per_region_efficiency"]
        for region_id in sorted(per_eff):
            eff = per_eff[region_id]["efficiencies"]
            mapped = mapped_by_region.get(region_id, 0)
            eff_lo = eff.get(lo_key, 0.0)
            eff_hi = eff.get(hi_key, 0.0)
            try:
                count_range = est.estimate_from_efficiency(mapped, eff_hi, eff_lo)
            except (DomainError, ValueError) as exc:
                skipped_regions[region_id] = str(exc)
                continue
            per_region[region_id] = {
                "mapped": mapped,
                "efficiency_at_" + lo_key: eff_lo,
                "efficiency_at_" + hi_key: eff_hi,
                "low": count_range.low,
                "high": count_range.high,
            }
            ranges.append(count_range)
        efficiency: dict[str, Any] = {
            "radii_m": radii,
            "per_region": per_region,
        }
        if skipped_regions:
            efficiency["skipped_regions"] = skipped_regions
            state.diagnostics["estimate_skipped_regions"] = sorted(skipped_regions)
        if ranges:
            total = est.combine_ranges(ranges)
            efficiency["total"] = _range_dict(total)
            efficiency["total_rounded"] = _range_dict(
                est.CountRange(
                    low=est.round_sig(total.low),
                    high=est.round_sig(total.high),
                    method=total.method,
                )
            )
            section["efficiency"] = efficiency
        else:
            section["efficiency"] = {"skipped": "no region produced a usable efficiency"}

    if config.field_density:
        fd = config.field_density
        try:
            count_range = est.estimate_from_density(
                float(fd["d_lo"]), float(fd["d_hi"]), float(fd["area_km2"])
            )
        except (ValueError, TypeError) as exc:
            section["density"] = {"skipped": f"field_density invalid: {exc}"}
        else:
            section["density"] = {
                "label": str(fd.get("label", "field_density")),
                "range": _range_dict(count_range),
            }
    else:
        section["density"] = {"skipped": "no field_density configured"}
    return section


def _range_dict(rng: est.CountRange) -> dict:
    return {"low": rng.low, "high": rng.high, "method": rng.method.value}


def _text_section(state: _PipelineState) -> dict:
    config = state.config
    lexicon = None
    if config.lexicon_path:
        lexicon = text_mod.parse_lemma_lexicon(config.lexicon_path.read_bytes())

    nodes = state.focus_nodes()
    keys_section: dict[str, Any] = {}
    for key in config.text_keys:
        values = [e.tags[key] for e in nodes if key in e.tags]
        suffix_elements = sum(
            1
            for e in nodes
            if any(t.startswith(key + "_") or t.startswith(key + ":") for t in e.tags)
        )
        length = text_mod.length_classes(values, split_at=config.length_split_at)
        standard = [v for v in values if len(v) <= text_mod.OSM_VALUE_MAX_LEN]
        lemmas = text_mod.lemma_frequencies(standard, lexicon)
        keys_section[key] = {
            "n_values": len(values),
            "suffix_key_elements": suffix_elements,
            "overlong_excluded": len(values) - len(standard),
            "length": {
                "split_at": config.length_split_at,
                "histogram": [[l, share] for l, share in length.histogram],
                "short_share": length.short_share,
                "long_share": length.long_share,
                "overlong_count": length.overlong_count,
            },
            "lemmas_top": [[lemma, count] for lemma, count in lemmas[:10]],
            "lemmas_total_tokens": sum(c for _, c in lemmas),
        }

    pos: dict[str, Any]
    distributions: dict[str, text_mod.PosDistribution] = {}
    pos_rejects = 0
    for label in sorted(config.tagged_value_paths):
        result = text_mod.pos_distribution_from_file(
            config.tagged_value_paths[label].read_bytes(), label
        )
        pos_rejects += len(result.rejects)
        distributions[label] = result.distribution
    corpora: dict[str, text_mod.PosDistribution] = {}
    for label in sorted(config.corpora_paths):
        result = text_mod.pos_distribution_from_file(
            config.corpora_paths[label].read_bytes(), label
        )
        pos_rejects += len(result.rejects)
        corpora[label] = result.distribution
    if pos_rejects:
        state.diagnostics.setdefault("rejects", {})["pos_lines"] = pos_rejects

    if distributions or corpora:
        distances = {}
        for label, dist in sorted(distributions.items()):
            for corpus_label, corpus in sorted(corpora.items()):
                distances[f"{label}_vs_{corpus_label}"] = text_mod.pos_distance(
                    dist, corpus
                )
        corpus_labels = sorted(corpora)
        for i, a in enumerate(corpus_labels):
            for b in corpus_labels[i + 1 :]:
                distances[f"{a}_vs_{b}"] = text_mod.pos_distance(corpora[a], corpora[b])
        pos = {
            "distributions": {
                label: dict(sorted(d.freq.items()))
                for label, d in sorted({**distributions, **corpora}.items())
            },
            "distances": distances,
        }
    else:
        pos = {"skipped": "no tagged token files configured"}

    return {"keys": keys_section, "pos": pos}


def _comparison_section(state: _PipelineState) -> dict:
    config = state.config
    sets = []
    rejects = 0
    for path in config.comparison_snapshot_paths:
        result = parse_osm_json(path.read_bytes(), source=Source.FILE)
        sets.append(result.element_set)
        rejects += len(result.rejects)
    if rejects:
        state.diagnostics.setdefault("rejects", {})["comparison_elements"] = rejects
    merged, _ = merge_element_sets(sets)
    nodes = list(merged.nodes())
    grouped = bool(state.regions)
    section, _ = _quality_metrics(nodes, state.element_set, state.region_of, grouped)
    section["label"] = config.comparison_label
    section["n_nodes"] = len(nodes)
    return section


# ---------------------------------------------------------------------------
# CSV emission


def _csv(rows: Iterable[Iterable[Any]]) -> str:
    lines = []
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    if any(c in text for c in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def _csv_files(sections: dict[str, Any], outcome: matching.MatchOutcome | None) -> dict[str, str]:
    files: dict[str, str] = {}

    contamination = sections.get("contamination")
    if contamination and "skipped" not in contamination:
        cats = contamination["categories"]
        rows = [["category"] + cats]
        for a in cats:
            rows.append([a] + [contamination["matrix"][a][b] for b in cats])
        files["contamination_matrix.csv"] = _csv(rows)

    quality = sections.get("quality")
    if quality and "skipped" not in quality:
        rows = [["group_id", "n", "median_days", "q1_days", "q3_days", "whisker_lo_days", "whisker_hi_days"]]
        hist_rows = [["group_id", "bin_start_days", "count"]]
        for g in quality["age"]["groups"]:
            rows.append(
                [g["group_id"], g["n"], g["median_days"], g["q1_days"], g["q3_days"], g["whisker_lo_days"], g["whisker_hi_days"]]
            )
            for start, count in g["histogram"]:
                hist_rows.append([g["group_id"], start, count])
        files["age_stats.csv"] = _csv(rows)
        files["age_histogram.csv"] = _csv(hist_rows)

        rows = [["group_id", "version", "share"]]
        for group, hist in quality["versions"].items():
            for version in ("1", "2", "3", "4+"):
                rows.append([group, version, hist[version]])
        files["version_histogram.csv"] = _csv(rows)

        rows = [["group_id", "n_contributors", "gini", "top_contributor_share"]]
        for c in quality["contributors"]:
            rows.append([c["group_id"], c["n_contributors"], c["gini"], c["top_contributor_share"]])
        files["contributor_inequality.csv"] = _csv(rows)

        rows = [["group_id", "n", "mean_descriptive_tags"]]
        key_rows = [["group_id", "key", "share"]]
        for r in quality["richness"]:
            rows.append([r["group_id"], r["n"], r["mean_descriptive_tags"]])
            for key, share in r["key_frequencies"]:
                key_rows.append([r["group_id"], key, share])
        files["tag_richness.csv"] = _csv(rows)
        files["tag_richness_keys.csv"] = _csv(key_rows)

        for key, coverage in quality["key_coverage"].items():
            rows = [["value", "count"]]
            for value, count in coverage["values"]:
                rows.append([value, count])
            files[f"key_coverage_{key}.csv"] = _csv(rows)

    match_section = sections.get("matching")
    if match_section and "skipped" not in match_section and outcome is not None:
        files["matches.csv"] = matching.matches_to_csv(outcome.results)
        rows = [["group_id", "radius_m", "cumulative_fraction"]]
        for radius, fraction in zip(
            match_section["curve"]["radii_m"],
            match_section["curve"]["cumulative_fraction"],
        ):
            rows.append(["all", radius, fraction])
        for region_id, fractions in sorted(match_section["per_region_curves"].items()):
            for radius, fraction in zip(match_section["curve"]["radii_m"], fractions):
                rows.append([region_id, radius, fraction])
        files["match_curve.csv"] = _csv(rows)

        edges = match_section["bins"]["edges_m"]
        labels = [f"r<={edges[0]:g}m"]
        labels += [f"{a:g}m<r<={b:g}m" for a, b in zip(edges, edges[1:])]
        labels += [f"r>{edges[-1]:g}m_or_unmatched"]
        rows = [["bin", "share"]]
        for label, share in zip(labels, match_section["bins"]["shares"]):
            rows.append([label, share])
        files["match_bins.csv"] = _csv(rows)

    fitting_section = sections.get("fitting")
    if fitting_section and "skipped" not in fitting_section:
        rows = [["region_id", "count", "density", "catholic_share_pct"]]
        for r in fitting_section["rows"]:
            rows.append([r["region_id"], r["count"], r["density"], r["catholic_share_pct"]])
        files["region_densities.csv"] = _csv(rows)
        if "curve_samples" in fitting_section:
            rows = [["catholic_share_pct", "density"]]
            for x, y in fitting_section["curve_samples"]:
                rows.append([x, y])
            files["logistic_curve.csv"] = _csv(rows)

    estimates = sections.get("estimates")
    if estimates and "skipped" not in estimates:
        rows = [["method", "scope", "low", "high"]]
        efficiency = estimates["efficiency"]
        if "skipped" not in efficiency:
            for region_id, entry in sorted(efficiency["per_region"].items()):
                rows.append(["efficiency", region_id, entry["low"], entry["high"]])
            rows.append(["efficiency", "total", efficiency["total"]["low"], efficiency["total"]["high"]])
        density = estimates["density"]
        if "skipped" not in density:
            rows.append(["density", density["label"], density["range"]["low"], density["range"]["high"]])
        if len(rows) > 1:
            files["estimates.csv"] = _csv(rows)

    text_section = sections.get("text")
    if text_section and "skipped" not in text_section:
        for key, entry in sorted(text_section["keys"].items()):
            rows = [["length", "share"]]
            for length, share in entry["length"]["histogram"]:
                rows.append([length, share])
            files[f"value_lengths_{key}.csv"] = _csv(rows)
            rows = [["lemma", "count"]]
            for lemma, count in entry["lemmas_top"]:
                rows.append([lemma, count])
            files[f"lemma_frequencies_{key}.csv"] = _csv(rows)
        pos = text_section["pos"]
        if "skipped" not in pos:
            rows = [["pair", "distance"]]
            for pair, distance in sorted(pos["distances"].items()):
                rows.append([pair, distance])
            files["pos_distances.csv"] = _csv(rows)

    return files


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(config: RunConfig) -> QualityReport:
    """Execute ingest, metrics, and every section the inputs allow.

    Sections without their inputs are marked skipped with a reason; any
    reject counters, skip reasons, or anomalies land in diagnostics. Two
    runs over identical inputs produce identical reports.
    """
    diagnostics: dict[str, Any] = {}
    element_set = _load_elements(config, diagnostics)
    regions = _load_regions(config, diagnostics)
    assign_point = _region_assigner(regions)

    def region_of(element: OsmElement) -> str | None:
        if element.kind is not ElementKind.NODE:
            return None
        return assign_point(GeoPoint(element.lat, element.lon))

    state = _PipelineState(
        config=config,
        element_set=element_set,
        regions=regions,
        region_of=region_of,
        diagnostics=diagnostics,
    )

    sections: dict[str, Any] = {
        "schema_version": 1,
        "snapshot_time": format_utc_timestamp(element_set.snapshot_time),
        "source": element_set.source.value,
        "categories": [c.name for c in config.categories],
        "focus_category": config.focus_category.name,
        "counts": _counts_section(element_set, config.categories),
        "contamination": _contamination_section(element_set, config.categories),
        "quality": _quality_section(state),
    }

    outcome: matching.MatchOutcome | None = None
    if config.references_path:
        try:
            match_section, outcome = _matching_section(state)
            sections["matching"] = match_section
        except (CrossAuditError, ValueError) as exc:
            sections["matching"] = {"skipped": f"matching failed: {exc}"}
    else:
        sections["matching"] = {"skipped": "no references_path configured"}

    regions_with_census = [r for r in regions if r.census is not None]
    if regions_with_census:
        try:
            sections["fitting"] = _fitting_section(state)
        except (CrossAuditError, ValueError) as exc:
            sections["fitting"] = {"skipped": f"fitting failed: {exc}"}
    elif not regions:
        sections["fitting"] = {"skipped": "no regions_path configured"}
    else:
        sections["fitting"] = {"skipped": "no region carries census data"}

    sections["estimates"] = _estimates_section(
        state, sections.get("matching")
    )

    if config.text_inputs_configured:
        try:
            sections["text"] = _text_section(state)
        except (CrossAuditError, ValueError) as exc:
            sections["text"] = {"skipped": f"text analysis failed: {exc}"}
    else:
        sections["text"] = {"skipped": "no text inputs configured"}

    if config.comparison_snapshot_paths:
        try:
            sections["comparison"] = _comparison_section(state)
        except (CrossAuditError, ValueError) as exc:
            sections["comparison"] = {"skipped": f"comparison failed: {exc}"}

    skipped = {
        name: section["skipped"]
        for name, section in sections.items()
        if isinstance(section, dict) and set(section) == {"skipped"}
    }
    if skipped:
        diagnostics["skipped_sections"] = skipped

    return QualityReport(
        sections=sections,
        diagnostics=diagnostics,
        csv_files=_csv_files(sections, outcome),
    )


def write_outputs(report: QualityReport, output_dir: Path) -> list[Path]:
    """Write report.json, diagnostics.json, and all figure CSVs."""
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    report_path = output_dir / "report.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    written.append(report_path)
    diag_path = output_dir / "diagnostics.json"
    diag_path.write_text(
        json.dumps(report.diagnostics, sort_keys=True, ensure_ascii=False, indent=2)
        + "\n",
        encoding="utf-8",
    )
    written.append(diag_path)
    for name, content in sorted(report.csv_files.items()):
        path = output_dir / name
        path.write_text(content, encoding="utf-8")
        written.append(path)
    return written
