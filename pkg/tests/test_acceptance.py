"""Acceptance gate: every release criterion at its stated tolerance.

Each test prints one `ACCEPTANCE PASS/FAIL: <criterion>` line. The live
Overpass check is optional and non-gating; it only runs when
CROSSAUDIT_LIVE_TESTS=1 and an endpoint is configured.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

from __future__ import annotations

import json
import math
import os
import random
import time
from datetime import datetime, timezone

import numpy as np
import pytest

from crossaudit.cli import main
from crossaudit.estimate import estimate_from_efficiency
from crossaudit.fitting import LogisticParams, fit_logistic, logistic
from crossaudit.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    build_spatial_index,
    haversine_distance,
    nearest_within,
)
from crossaudit.ingest import parse_osm_json, parse_reference_features
from crossaudit.matching import (
    bin_table,
    match_category_nodes,
    match_references,
    matching_curve,
)
from crossaudit.metrics import age_stats, cooccurrence_matrix, gini
from crossaudit.model import CrossCategory, ElementKind, OsmElement
from crossaudit.text import PosDistribution, pos_distance

from .conftest import FIXTURES, make_node


def _verdict(name: str):
    class _Reporter:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            print(f"\nACCEPTANCE {'PASS' if exc_type is None else 'FAIL'}: {name}")
            return False

    return _Reporter()


def test_spatial_oracle_equivalence():
    with _verdict("spatial oracle equivalence (200 queries vs 1000 points, <5 s)"):
        rng = random.Random(2023)
        points = [
            (i, GeoPoint(rng.uniform(47.0, 50.6), rng.uniform(9.0, 13.8)))
            for i in range(1000)
        ]
        index = build_spatial_index(points)
        start = time.perf_counter()
        for _ in range(200):
            q = GeoPoint(rng.uniform(47.0, 50.6), rng.uniform(9.0, 13.8))
            cutoff = rng.choice([250.0, 500.0, 5000.0, 60000.0])
            got = nearest_within(index, q, cutoff)
            best = None
            for pid, p in points:
                d = haversine_distance(q, p)
                if d <= cutoff and (
                    best is None or d < best[1] or (d == best[1] and pid < best[0])
                ):
                    best = (pid, d)
            if best is None:
                assert got is None
            else:
                assert got is not None
                assert got[0] == best[0]
                assert abs(got[1] - best[1]) <= 1e-9 * max(best[1], 1.0)
        assert time.perf_counter() - start < 5.0


def test_haversine_analytics():
    with _verdict("haversine analytics (1 deg meridian, antipodal arc)"):
        one_degree = haversine_distance(GeoPoint(0, 0), GeoPoint(1, 0))
        assert abs(one_degree - EARTH_RADIUS_M * math.pi / 180.0) <= 0.01
        antipodal = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 180))
        assert abs(antipodal - math.pi * 6_371_008.8) <= 0.1


def test_gini_criteria():
    with _verdict("gini exact values, bounds, scale invariance (1000 vectors)"):
        assert gini([1, 3]).gini == 0.25
        assert gini([5, 5, 5, 5]).gini == 0.0
        rng = random.Random(99)
        for _ in range(1000):
            xs = [rng.randint(0, 10_000) for _ in range(rng.randint(1, 50))]
            if sum(xs) == 0:
                xs[0] = 1
            g = gini(xs).gini
            assert 0.0 <= g <= 1.0 - 1.0 / len(xs) + 1e-12
            scaled = gini([x * 3.7 for x in xs]).gini
            assert abs(g - scaled) <= 1e-12


def test_quantile_criteria():
    with _verdict("quantiles and whiskers (linear interpolation, 1.5 IQR)"):
        ref = datetime(2023, 5, 23, tzinfo=timezone.utc)

        def stats_for(ages):
            nodes = [
                make_node(
                    i + 1,
                    {"historic": "wayside_cross"},
                    timestamp=datetime.fromtimestamp(
                        ref.timestamp() - a * 86400.0, tz=timezone.utc
                    ).isoformat(),
                )
                for i, a in enumerate(ages)
            ]
            (stats,) = age_stats(nodes, ref)
            return stats

        plain = stats_for([10, 20, 30, 40, 50])
        assert (plain.q1_days, plain.median_days, plain.q3_days) == (20.0, 30.0, 40.0)
        outlier = stats_for([10, 20, 30, 40, 1000])
        assert outlier.whisker_hi_days == 40.0


def test_logistic_fit_recovery():
    with _verdict("logistic fit recovery (noiseless 1e-3/1e-8, noisy x0 +-10%)"):
        true = LogisticParams(a=2.0, k=0.3, x0=40.0, b=0.05)
        x = np.linspace(0.0, 100.0, 50)
        noiseless = [(float(xi), logistic(float(xi), true)) for xi in x]
        start = time.perf_counter()
        fit = fit_logistic(noiseless)
        assert time.perf_counter() - start < 1.0
        assert fit.rmse < 1e-8
        for name in ("a", "k", "x0", "b"):
            assert abs(getattr(fit.params, name) - getattr(true, name)) <= 1e-3 * abs(
                getattr(true, name)
            )
        rng = np.random.default_rng(42)
        noisy = [
            (xi, yi * (1.0 + 0.05 * rng.standard_normal())) for xi, yi in noiseless
        ]
        noisy_fit = fit_logistic(noisy)
        assert abs(noisy_fit.params.x0 - true.x0) <= 0.10 * true.x0


def test_cooccurrence_criteria():
    with _verdict("co-occurrence asymmetry fixture and reciprocity identity"):
        nodes = [make_node(i, {"historic": "wayside_cross"}) for i in range(1, 4)]
        nodes.append(make_node(4, {"historic": "wayside_cross", "man_made": "cross"}))
        matrix = cooccurrence_matrix(nodes, list(CrossCategory))
        assert matrix.fraction(CrossCategory.HWC, CrossCategory.MMC) == 0.25
        assert matrix.fraction(CrossCategory.MMC, CrossCategory.HWC) == 1.0

        rng = random.Random(7)
        cats = list(CrossCategory)
        for _ in range(100):
            fixture = []
            for i in range(rng.randint(1, 40)):
                member = rng.sample(cats, rng.randint(1, 3))
                tags = {}
                for c in member:
                    tags[c.key] = c.tag_value
                fixture.append(make_node(i + 1, tags))
            m = cooccurrence_matrix(fixture, cats)
            for a in cats:
                for b in cats:
                    if a is b:
                        continue
                    ab, ba = m.fraction(a, b), m.fraction(b, a)
                    if ab is None or ba is None:
                        continue
                    assert abs(ab * m.counts[a] - ba * m.counts[b]) <= 1e-9


def test_matching_pipeline_golden():
    with _verdict("matching pipeline golden fixture vs exhaustive oracle"):
        snapshot = parse_osm_json((FIXTURES / "snapshot.json").read_bytes())
        refs = parse_reference_features((FIXTURES / "references.geojson").read_bytes())
        nodes = match_category_nodes(snapshot.element_set)
        outcome = match_references(refs.features, nodes, cutoff_m=500.0)

        # oracle: exhaustive scan per located, included reference
        from crossaudit.geo import polygon_centroid
        from crossaudit.ingest import Classification

        oracle_distances: list[float | None] = []
        included = [
            r
            for r in refs.features
            if r.classification
            in (Classification.CLEARLY_CROSS, Classification.UNCLEAR)
            and r.has_location
        ]
        assert len(included) == len(outcome.results)
        for ref, got in zip(included, outcome.results):
            centroid = polygon_centroid(ref.geometry)
            best = None
            for node in nodes:
                d = haversine_distance(centroid, GeoPoint(node.lat, node.lon))
                if best is None or d < best[1] or (d == best[1] and node.id < best[0]):
                    best = (node.id, d)
            if best is not None and best[1] <= 500.0:
                assert got.matched
                assert got.node_id == best[0]
                assert got.distance_m == best[1]
                oracle_distances.append(best[1])
            else:
                assert not got.matched
                oracle_distances.append(None)

        # oracle curve and bins by direct counting
        radii = [float(r) for r in range(1, 501)]
        n = len(oracle_distances)
        oracle_curve = tuple(
            sum(1 for d in oracle_distances if d is not None and d <= r) / n
            for r in radii
        )
        curve = matching_curve(outcome.results, radii)
        assert curve.cumulative_fraction == oracle_curve

        edges = [30.0, 50.0, 150.0]
        oracle_bins = [
            sum(1 for d in oracle_distances if d is not None and d <= 30.0) / n,
            sum(1 for d in oracle_distances if d is not None and 30.0 < d <= 50.0) / n,
            sum(1 for d in oracle_distances if d is not None and 50.0 < d <= 150.0) / n,
            sum(1 for d in oracle_distances if d is None or d > 150.0) / n,
        ]
        bins = bin_table(outcome.results, edges)
        assert bins == oracle_bins
        assert abs(sum(bins) - 1.0) <= 1e-12
        # frozen expectations computed with this oracle during development
        assert n == 27
        assert bins == [10 / 27, 3 / 27, 6 / 27, 8 / 27]


def test_estimation_identities():
    with _verdict("estimation identities and round trip"):
        bracket = estimate_from_efficiency(100, 0.5, 0.25)
        assert (bracket.low, bracket.high) == (200.0, 400.0)
        rng = random.Random(11)
        for _ in range(500):
            eff_lo = rng.uniform(0.01, 0.95)
            eff_hi = rng.uniform(eff_lo, 1.0)
            mapped = rng.randint(1, 1_000_000)
            r = estimate_from_efficiency(mapped, eff_hi, eff_lo)
            assert eff_lo - 1e-12 <= mapped / r.high <= mapped / r.low <= eff_hi + 1e-12


def test_pos_distance_metric():
    with _verdict("pos distance metric properties (500 triples, disjoint = 2)"):
        p = PosDistribution(label="p", freq={"NN": 0.5, "NE": 0.5})
        q = PosDistribution(label="q", freq={"CARD": 0.25, "ART": 0.75})
        assert pos_distance(p, q) == 2.0

        rng = random.Random(5)
        tags = ["NN", "NE", "CARD", "ART", "ADJA", "ADJD", "APPR", "APPRART", "$,"]

        def random_dist(label):
            chosen = rng.sample(tags, rng.randint(1, len(tags)))
            weights = [rng.randint(1, 30) for _ in chosen]
            total = sum(weights)
            return PosDistribution(
                label=label, freq={t: w / total for t, w in zip(chosen, weights)}
            )

        for _ in range(500):
            a, b, c = (random_dist(x) for x in "abc")
            ab = pos_distance(a, b)
            assert abs(ab - pos_distance(b, a)) <= 1e-15
            assert pos_distance(a, a) == 0.0
            assert 0.0 <= ab <= 2.0
            assert pos_distance(a, c) <= ab + pos_distance(b, c) + 1e-12


def test_end_to_end_determinism(tmp_path):
    with _verdict("end-to-end determinism (byte-identical report.json)"):
        config = str(FIXTURES / "config.json")
        code1 = main(["report", "--config", config, "--out", str(tmp_path / "run1")])
        code2 = main(["report", "--config", config, "--out", str(tmp_path / "run2")])
        assert code1 == code2
        first = (tmp_path / "run1" / "report.json").read_bytes()
        second = (tmp_path / "run2" / "report.json").read_bytes()
        assert first == second
        # and it reproduces the committed golden byte for byte
        assert first == (FIXTURES / "golden" / "report.json").read_bytes()


LIVE = os.environ.get("CROSSAUDIT_LIVE_TESTS") == "1" and bool(
    os.environ.get("CROSSAUDIT_OVERPASS_ENDPOINT")
)


@pytest.mark.skipif(
    not LIVE,
    reason="optional live check; set CROSSAUDIT_LIVE_TESTS=1 and "
    "CROSSAUDIT_OVERPASS_ENDPOINT to enable",
)
def test_live_bavaria_snapshot():
    """Non-gating: current Bavaria HWC snapshot vs the historical figures.

    District-level grouping needs boundary polygons, which are not
    bundled; the version-share and inequality checks therefore run
    statewide, which stays within the stated per-district bands.
    """
    with _verdict("optional live Bavaria snapshot"):
        from crossaudit.ingest import build_overpass_query, fetch_overpass
        from crossaudit.metrics import version_histogram

        endpoint = os.environ["CROSSAUDIT_OVERPASS_ENDPOINT"]
        query = build_overpass_query("historic", "wayside_cross", "DE-BY", 300)
        result = fetch_overpass(endpoint, query)
        nodes = [
            e
            for e in result.element_set.elements
            if e.kind is ElementKind.NODE
        ]
        assert 20393 * 0.75 <= len(nodes) <= 20393 * 1.25
        hist = version_histogram(nodes)
        assert 0.55 <= hist["1"] <= 0.90
        counts: dict[int, int] = {}
        for e in nodes:
            counts[e.uid] = counts.get(e.uid, 0) + 1
        assert gini(sorted(counts.values())).gini >= 0.85
