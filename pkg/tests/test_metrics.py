from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossaudit.errors import DomainError
from crossaudit.metrics import (
    AgeStats,
    age_stats,
    cooccurrence_matrix,
    gini,
    key_coverage,
    tag_richness,
    version_histogram,
)
from crossaudit.model import CrossCategory

from .conftest import make_node

UTC = timezone.utc
ALL_CATS = list(CrossCategory)


def nodes_with_ages(ages_days, reference="2023-05-23T00:00:00Z"):
    ref = datetime.fromisoformat(reference.replace("Z", "+00:00"))
    out = []
    for i, age in enumerate(ages_days):
        ts = ref.timestamp() - age * 86400.0
        stamp = datetime.fromtimestamp(ts, tz=UTC)
        out.append(
            make_node(i + 1, {"historic": "wayside_cross"}, timestamp=stamp.isoformat())
        )
    return out, ref


class TestCooccurrence:
    def test_hwc_mmc_asymmetry(self):
        nodes = [make_node(i, {"historic": "wayside_cross"}) for i in range(1, 4)]
        nodes.append(make_node(4, {"historic": "wayside_cross", "man_made": "cross"}))
        m = cooccurrence_matrix(nodes, ALL_CATS)
        assert m.fraction(CrossCategory.HWC, CrossCategory.MMC) == 0.25
        assert m.fraction(CrossCategory.MMC, CrossCategory.HWC) == 1.0

    def test_ten_mtc_one_dual(self):
        nodes = [make_node(i, {"memorial:type": "cross"}) for i in range(1, 10)]
        nodes.append(make_node(10, {"memorial:type": "cross", "memorial": "cross"}))
        m = cooccurrence_matrix(nodes, ALL_CATS)
        assert m.fraction(CrossCategory.MTC, CrossCategory.MC) == pytest.approx(0.10)

    def test_no_dual_tags_all_zero(self):
        nodes = [
            make_node(1, {"historic": "wayside_cross"}),
            make_node(2, {"man_made": "cross"}),
        ]
        m = cooccurrence_matrix(nodes, ALL_CATS)
        assert m.fraction(CrossCategory.HWC, CrossCategory.MMC) == 0.0
        assert m.fraction(CrossCategory.MMC, CrossCategory.HWC) == 0.0

    def test_diagonal_absent_and_empty_rows_undefined(self):
        nodes = [make_node(1, {"historic": "wayside_cross"})]
        m = cooccurrence_matrix(nodes, ALL_CATS)
        assert m.fraction(CrossCategory.HWC, CrossCategory.HWC) is None
        assert m.fraction(CrossCategory.SMY, CrossCategory.HWC) is None
        assert CrossCategory.SMY in m.undefined_rows()
        assert CrossCategory.HWC not in m.undefined_rows()

    def test_empty_categories_rejected(self):
        with pytest.raises(ValueError):
            cooccurrence_matrix([], [])

    def test_reciprocity_identity_on_random_fixtures(self):
        rng = random.Random(5)
        defining = {c: {c.key: c.tag_value} for c in ALL_CATS}
        for _ in range(50):
            nodes = []
            for i in range(rng.randint(1, 60)):
                member = rng.sample(ALL_CATS, rng.randint(1, 3))
                tags = {}
                for c in member:
                    tags.update(defining[c])
                nodes.append(make_node(i + 1, tags))
            m = cooccurrence_matrix(nodes, ALL_CATS)
            for a in ALL_CATS:
                for b in ALL_CATS:
                    if a is b:
                        continue
                    ab = m.fraction(a, b)
                    ba = m.fraction(b, a)
                    if ab is None or ba is None:
                        continue
                    assert 0.0 <= ab <= 1.0
                    joint_ab = ab * m.counts[a]
                    joint_ba = ba * m.counts[b]
                    assert joint_ab == pytest.approx(joint_ba, abs=1e-9)


class TestAgeStats:
    def test_single_element(self):
        nodes, ref = nodes_with_ages([100.0])
        (stats,) = age_stats(nodes, ref)
        assert stats.n == 1
        assert stats.median_days == stats.q1_days == stats.q3_days == 100.0
        assert stats.whisker_lo_days == stats.whisker_hi_days == 100.0

    def test_five_point_quantiles(self):
        nodes, ref = nodes_with_ages([10, 20, 30, 40, 50])
        (stats,) = age_stats(nodes, ref)
        assert stats.q1_days == pytest.approx(20.0)
        assert stats.median_days == pytest.approx(30.0)
        assert stats.q3_days == pytest.approx(40.0)
        assert stats.whisker_lo_days == pytest.approx(10.0)
        assert stats.whisker_hi_days == pytest.approx(50.0)

    def test_outlier_capped_whisker(self):
        nodes, ref = nodes_with_ages([10, 20, 30, 40, 1000])
        (stats,) = age_stats(nodes, ref)
        assert stats.whisker_hi_days == pytest.approx(40.0)

    def test_future_timestamp_skipped(self):
        nodes, ref = nodes_with_ages([100.0, -5.0])
        (stats,) = age_stats(nodes, ref)
        assert stats.n == 1

    def test_grouping(self):
        nodes, ref = nodes_with_ages([10, 20, 30, 40])
        groups = {1: "a", 2: "a", 3: "b", 4: "b"}
        result = age_stats(nodes, ref, group_by=lambda e: groups[e.id])
        assert [s.group_id for s in result] == ["a", "b"]
        assert result[0].n == 2

    def test_histogram_bins(self):
        nodes, ref = nodes_with_ages([10, 95, 100, 200])
        (stats,) = age_stats(nodes, ref)
        assert stats.histogram == ((0.0, 1), (90.0, 2), (180.0, 1))

    def test_q3_monotone_when_adding_above(self):
        rng = random.Random(17)
        for _ in range(30):
            data = [rng.uniform(1, 2000) for _ in range(rng.randint(3, 40))]
            nodes, ref = nodes_with_ages(data)
            (before,) = age_stats(nodes, ref)
            data.append(before.q3_days + rng.uniform(1, 500))
            nodes2, ref2 = nodes_with_ages(data)
            (after,) = age_stats(nodes2, ref2)
            assert after.q3_days >= before.q3_days - 1e-9


class TestVersionHistogram:
    def test_all_version_one(self):
        nodes = [make_node(i, version=1) for i in range(1, 4)]
        hist = version_histogram(nodes)
        assert hist == {"1": 1.0, "2": 0.0, "3": 0.0, "4+": 0.0}

    def test_pooling(self):
        versions = [1, 1, 2, 3, 4, 7]
        nodes = [make_node(i + 1, version=v) for i, v in enumerate(versions)]
        hist = version_histogram(nodes)
        assert hist["1"] == pytest.approx(1 / 3)
        assert hist["2"] == pytest.approx(1 / 6)
        assert hist["3"] == pytest.approx(1 / 6)
        assert hist["4+"] == pytest.approx(1 / 3)

    def test_fractions_sum_to_one(self):
        rng = random.Random(23)
        for _ in range(30):
            nodes = [
                make_node(i + 1, version=rng.randint(1, 10))
                for i in range(rng.randint(1, 50))
            ]
            assert sum(version_histogram(nodes).values()) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        assert version_histogram([]) == {"1": 0.0, "2": 0.0, "3": 0.0, "4+": 0.0}


class TestGini:
    def test_perfect_equality(self):
        assert gini([5, 5, 5, 5]).gini == 0.0

    def test_two_contributors(self):
        stat = gini([1, 3])
        assert stat.gini == 0.25
        assert stat.n_contributors == 2
        assert stat.top_contributor_share == 0.75

    def test_all_zero_rejected(self):
        with pytest.raises(DomainError):
            gini([0, 0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            gini([1, -1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gini([])

    def test_matches_pairwise_oracle(self):
        rng = random.Random(31)
        for _ in range(40):
            xs = [rng.randint(0, 200) for _ in range(rng.randint(2, 30))]
            if sum(xs) == 0:
                xs[0] = 1
            n, total = len(xs), sum(xs)
            oracle = sum(abs(a - b) for a in xs for b in xs) / (2 * n * total)
            assert gini(xs).gini == pytest.approx(oracle, abs=1e-12)

    def test_bounds_and_scale_invariance(self):
        rng = random.Random(37)
        for _ in range(200):
            xs = [rng.randint(0, 1000) for _ in range(rng.randint(1, 40))]
            if sum(xs) == 0:
                xs[0] = 1
            stat = gini(xs)
            assert 0.0 <= stat.gini <= 1.0 - 1.0 / len(xs) + 1e-12
            scaled = gini([x * 7 for x in xs])
            assert abs(stat.gini - scaled.gini) <= 1e-12

    def test_transfer_principle(self):
        rng = random.Random(41)
        for _ in range(100):
            xs = sorted(rng.randint(0, 500) for _ in range(rng.randint(2, 25)))
            if xs[-1] - xs[0] < 2:
                continue
            before = gini(xs).gini
            moved = list(xs)
            moved[-1] -= 1
            moved[0] += 1
            after = gini(moved).gini
            assert after <= before + 1e-12

    @given(st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=60))
    def test_hypothesis_bounds(self, xs):
        if sum(xs) == 0:
            xs = xs + [1]
        stat = gini(xs)
        assert 0.0 <= stat.gini <= 1.0 - 1.0 / len(xs) + 1e-12


class TestTagRichness:
    def test_single_node(self):
        node = make_node(
            1, {"historic": "wayside_cross", "material": "wood", "name": "X"}
        )
        (stats,) = tag_richness([node], CrossCategory.HWC)
        assert stats.mean_descriptive_tags == 2.0
        assert stats.n == 1

    def test_four_node_fixture(self):
        nodes = [
            make_node(1, {"historic": "wayside_cross"}),
            make_node(2, {"historic": "wayside_cross", "material": "wood"}),
            make_node(3, {"historic": "wayside_cross", "religion": "christian"}),
            make_node(
                4,
                {"historic": "wayside_cross", "material": "stone", "name": "K"},
            ),
        ]
        (stats,) = tag_richness(nodes, CrossCategory.HWC)
        assert stats.mean_descriptive_tags == pytest.approx(1.0)
        assert stats.key_frequencies == (
            ("material", 0.5),
            ("name", 0.25),
            ("religion", 0.25),
        )

    def test_empty_group_marked(self):
        stats = tag_richness([], CrossCategory.HWC, groups=["empty"])
        assert stats[0].group_id == "empty"
        assert stats[0].n == 0
        assert stats[0].mean_descriptive_tags is None

    def test_non_members_ignored(self):
        nodes = [
            make_node(1, {"historic": "wayside_cross", "material": "wood"}),
            make_node(2, {"man_made": "cross", "material": "iron"}),
        ]
        (stats,) = tag_richness(nodes, CrossCategory.HWC)
        assert stats.n == 1


class TestKeyCoverage:
    def test_absent_key(self):
        nodes = [make_node(1, {"historic": "wayside_cross"})]
        cov = key_coverage(nodes, "material")
        assert cov.coverage == 0.0
        assert cov.values == ()

    def test_value_histogram(self):
        tags = ["wood", "wood", "wood", "stone"]
        nodes = [
            make_node(i + 1, {"historic": "wayside_cross", "material": m})
            for i, m in enumerate(tags)
        ]
        nodes.append(make_node(9, {"historic": "wayside_cross"}))
        cov = key_coverage(nodes, "material")
        assert cov.coverage == pytest.approx(4 / 5)
        assert cov.values == (("wood", 3), ("stone", 1))

    def test_ties_lexicographic(self):
        nodes = [
            make_node(1, {"material": "stone"}),
            make_node(2, {"material": "iron"}),
        ]
        cov = key_coverage(nodes, "material")
        assert cov.values == (("iron", 1), ("stone", 1))

    def test_empty_input(self):
        cov = key_coverage([], "material")
        assert cov.coverage == 0.0
