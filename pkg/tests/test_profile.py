from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from edusim.data import Dataset, Exercise, make_log
from edusim.profile import TIER_RANK, TierConfig, compute_profile, random_profile, tierize

from conftest import tiny_dataset


def bank(n_items, n_concepts):
    ex = {f"e{i:04d}": Exercise(f"e{i:04d}", f"k{i % n_concepts:03d}") for i in range(n_items)}
    return Dataset(ex, {}, frozenset(f"k{j:03d}" for j in range(n_concepts)))


class TestComputeProfile:
    def test_activity_of_typical_learner(self):
        ds = bank(1032, 458)
        log = make_log("u", [(f"e{i:04d}", 1) for i in range(36)])
        prof = compute_profile(log, ds, 0.0)
        assert prof.activity == float(Fraction(36, 1032))
        assert prof.activity == pytest.approx(0.0349, abs=5e-5)

    def test_success_rate(self):
        ds = bank(10, 2)
        log = make_log("u", [("e0000", 1), ("e0001", 1), ("e0002", 0), ("e0003", 1)])
        assert compute_profile(log, ds, 0.0).success_rate == 0.75

    def test_empty_log(self):
        prof = compute_profile(make_log("u", []), bank(5, 2), 0.3)
        assert (prof.activity, prof.diversity, prof.success_rate) == (0.0, 0.0, 0.0)
        assert prof.preference == ()
        assert prof.ability == 0.3

    def test_preference_ties_by_id(self):
        ds = tiny_dataset()
        prof = compute_profile(ds.logs["alice"], ds, 1.0, TierConfig(preference_size=2))
        assert prof.preference == ("A", "B")
        prof = compute_profile(make_log("v", [("x4", 1), ("x3", 0)]), ds, 0.0)
        assert prof.preference == ("B", "C")

    def test_tiers(self):
        ds = tiny_dataset()
        prof = compute_profile(ds.logs["alice"], ds, 1.0)
        # activity 3/4, diversity 2/3, success 2/3, ability 1.0
        assert prof.tiers == {"activity": "high", "diversity": "high",
                              "success_rate": "high", "ability": "high"}

    def test_duplicating_bank_halves_activity(self):
        ds = bank(20, 4)
        big = bank(40, 4)
        log = make_log("u", [(f"e{i:04d}", 1) for i in range(7)])
        assert compute_profile(log, big, 0).activity * 2 == compute_profile(log, ds, 0).activity

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=30), st.integers(0, 1))
    def test_appending_matches_incremental(self, ys, y_new):
        ds = bank(40, 5)
        log = make_log("u", [(f"e{i:04d}", y) for i, y in enumerate(ys)])
        longer = make_log("u", [(f"e{i:04d}", y) for i, y in enumerate(ys + [y_new])])
        before = compute_profile(log, ds, 0).success_rate
        after = compute_profile(longer, ds, 0).success_rate
        assert after == pytest.approx((before * len(ys) + y_new) / (len(ys) + 1), abs=1e-12)
        assert after == float(Fraction(sum(ys) + y_new, len(ys) + 1))


class TestTierize:
    @pytest.mark.parametrize("value, tier", [(0.0, "low"), (1 / 3, "medium"), (0.99, "high"),
                                             (2 / 3, "high"), (0.3333, "low")])
    def test_examples(self, value, tier):
        assert tierize(value, (1 / 3, 2 / 3)) == tier

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            tierize(0.5, (0.6, 0.4))

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_monotone(self, x, y):
        lo, hi = sorted((x, y))
        for bounds in ((1 / 3, 2 / 3), (-0.5, 0.5)):
            assert TIER_RANK[tierize(lo, bounds)] <= TIER_RANK[tierize(hi, bounds)]


class TestRandomProfile:
    concepts = [f"k{i}" for i in range(10)]

    def test_deterministic(self):
        assert random_profile(7, self.concepts) == random_profile(7, self.concepts)

    def test_ranges_over_many_seeds(self):
        for seed in range(1000):
            p = random_profile(seed, self.concepts)
            assert 0 <= p.activity <= 1 and 0 <= p.diversity <= 1 and 0 <= p.success_rate <= 1
            assert set(p.preference) <= set(self.concepts) and len(p.preference) == 3
            assert p.tiers["ability"] == tierize(p.ability, (-0.5, 0.5))

    def test_distinct_seeds_differ(self):
        assert random_profile(1, self.concepts) != random_profile(2, self.concepts)
