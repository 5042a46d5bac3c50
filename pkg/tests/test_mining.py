import math
import random
from fractions import Fraction

import pytest

from adrrefine.baskets import BasketDatabase
from adrrefine.codes import Item, ItemKind
from adrrefine.errors import ConfigError, DomainError
from adrrefine.mining import (
    AssociationRule,
    MiningConstraints,
    build_contingency,
    chi_squared,
    min_count_for,
    mine_all_rules,
    mine_rules,
    read_rules_csv,
    read_rules_json,
    rule_measures,
    supp,
    write_rules_csv,
    write_rules_json,
)

from oracles import brute_force_rules, chi2_counts_oracle

ITEM_POOL = [Item(ItemKind.READ, f"{c}{i:02d}..") for c in "ABCDE" for i in range(4)]


def random_db(rng: random.Random, max_baskets=300, max_items=20, min_baskets=20, min_items=4):
    n_items = rng.randint(min_items, max_items)
    n_baskets = rng.randint(min_baskets, max_baskets)
    items = ITEM_POOL[:n_items]
    density = rng.uniform(0.08, 0.5)
    baskets = []
    for j in range(n_baskets):
        members = frozenset(it for it in items if rng.random() < density)
        if not members:
            members = frozenset([rng.choice(items)])
        baskets.append((f"p{j}", members))
    return BasketDatabase(baskets)


class TestConstraints:
    def test_defaults(self):
        c = MiningConstraints()
        assert (c.min_left_support, c.min_confidence, c.max_antecedent) == (0.001, 0.01, 3)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"min_left_support": 0.0},
            {"min_left_support": 1.5},
            {"min_confidence": 0.0},
            {"min_confidence": -0.2},
            {"max_antecedent": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            MiningConstraints(**kwargs)

    def test_min_count_threshold(self):
        rng = random.Random(31)
        for _ in range(500):
            m = rng.randint(1, 5000)
            t = rng.uniform(1e-4, 1.0)
            c = min_count_for(t, m)
            assert c / m >= t
            assert c == 1 or (c - 1) / m < t


class TestContingency:
    def test_independence_gives_equal_cells(self):
        t = build_contingency(0.25, 0.5, 0.5, 100)
        assert t.observed == t.expected == (0.25, 0.25, 0.25, 0.25)

    def test_perfect_overlap(self):
        t = build_contingency(0.5, 0.5, 0.5, 100)
        assert t.observed == (0.5, 0.0, 0.0, 0.5)

    def test_cells_sum_to_one(self):
        rng = random.Random(32)
        for _ in range(1000):
            m = rng.randint(2, 2000)
            cx = rng.randint(1, m)
            cy = rng.randint(1, m)
            cxy = rng.randint(max(0, cx + cy - m), min(cx, cy))
            t = build_contingency(Fraction(cxy, m), Fraction(cx, m), Fraction(cy, m), m)
            assert math.isclose(sum(t.observed), 1.0, abs_tol=1e-12)
            assert math.isclose(sum(t.expected), 1.0, abs_tol=1e-12)
            assert all(v >= 0 for v in t.observed + t.expected)

    def test_inconsistent_supports_rejected(self):
        with pytest.raises(DomainError):
            build_contingency(0.6, 0.5, 0.7, 10)
        with pytest.raises(DomainError):
            build_contingency(0.1, 0.9, 0.8, 10)  # union would exceed 1


class TestChiSquared:
    def test_zero_when_observed_equals_expected(self):
        t = build_contingency(0.25, 0.5, 0.5, 100)
        assert chi_squared(t) == 0.0

    def test_hand_computed_perfect_association(self):
        # counts 50/0/0/50 in 100 baskets: every cell contributes 25.
        t = build_contingency(0.5, 0.5, 0.5, 100)
        assert chi_squared(t) == pytest.approx(100.0, abs=1e-12)

    def test_degenerate_marginal_flagged_as_zero(self):
        t = build_contingency(0.5, 0.5, 1.0, 100)
        assert t.degenerate
        assert chi_squared(t) == 0.0

    def test_matches_count_oracle(self):
        rng = random.Random(33)
        for _ in range(1000):
            m = rng.randint(2, 3000)
            cx = rng.randint(1, m)
            cy = rng.randint(1, m)
            cxy = rng.randint(max(0, cx + cy - m), min(cx, cy))
            t = build_contingency(Fraction(cxy, m), Fraction(cx, m), Fraction(cy, m), m)
            got = chi_squared(t)
            want = chi2_counts_oracle(cxy, cx, cy, m)
            assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9)


class TestRuleMeasures:
    def test_simple_arithmetic(self):
        meas = rule_measures(1, 2, 2, 4)
        assert meas.support == 0.25
        assert meas.left_support == 0.5
        assert meas.confidence == 0.5
        assert meas.lift == 1.0
        assert meas.chi_squared == 0.0

    def test_perfect_implication(self):
        meas = rule_measures(2, 2, 2, 4)
        assert meas.confidence == 1.0
        assert meas.lift == 2.0

    def test_independence_means_unit_lift_and_zero_chi(self):
        meas = rule_measures(6, 12, 20, 40)  # 6*40 == 12*20
        assert meas.lift == 1.0
        assert meas.chi_squared == 0.0

    def test_empty_marginals_rejected(self):
        with pytest.raises(DomainError):
            rule_measures(0, 0, 2, 4)
        with pytest.raises(DomainError):
            rule_measures(0, 2, 0, 4)

    def test_identities_on_random_counts(self):
        rng = random.Random(34)
        for _ in range(1000):
            m = rng.randint(2, 2000)
            cx = rng.randint(1, m)
            cy = rng.randint(1, m)
            cxy = rng.randint(max(0, cx + cy - m), min(cx, cy))
            meas = rule_measures(cxy, cx, cy, m)
            # confidence * left_support == support, exactly on the count scale
            assert Fraction(cxy, cx) * Fraction(cx, m) == Fraction(cxy, m)
            assert math.isclose(
                meas.confidence * meas.left_support, meas.support, rel_tol=1e-12, abs_tol=1e-15
            )
            degenerate = cx == m or cy == m
            if not degenerate:
                assert (meas.lift == 1.0) == (meas.chi_squared == 0.0)
                assert (cxy * m == cx * cy) == (meas.chi_squared == 0.0)
            assert math.isclose(
                meas.chi_squared,
                chi2_counts_oracle(cxy, cx, cy, m),
                rel_tol=1e-9,
                abs_tol=1e-9,
            )

    def test_symmetry_in_x_and_y(self):
        rng = random.Random(35)
        for _ in range(300):
            m = rng.randint(2, 1000)
            cx = rng.randint(1, m)
            cy = rng.randint(1, m)
            cxy = rng.randint(max(0, cx + cy - m), min(cx, cy))
            a = rule_measures(cxy, cx, cy, m)
            b = rule_measures(cxy, cy, cx, m)
            assert a.lift == b.lift
            assert math.isclose(a.chi_squared, b.chi_squared, rel_tol=1e-9, abs_tol=1e-9)


def assert_rules_match_oracle(db, consequent, constraints):
    mined = mine_rules(db, consequent, constraints)
    oracle = brute_force_rules(
        [set(b) for _, b in db.baskets],
        consequent,
        constraints.min_left_support,
        constraints.min_confidence,
        constraints.max_antecedent,
    )
    assert {r.antecedent for r in mined} == set(oracle)
    for r in mined:
        support, left, conf, lift, chi = oracle[r.antecedent]
        assert math.isclose(r.support, support, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(r.left_support, left, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(r.confidence, conf, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(r.lift, lift, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(r.chi_squared, chi, rel_tol=1e-9, abs_tol=1e-9)


class TestMineRules:
    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(36)
        for _ in range(25):
            db = random_db(rng)
            consequent = rng.choice(db.items)
            constraints = MiningConstraints(
                min_left_support=rng.choice([0.001, 0.01, 0.05, 0.2]),
                min_confidence=rng.choice([0.01, 0.1, 0.4, 0.8]),
                max_antecedent=rng.randint(1, 3),
            )
            assert_rules_match_oracle(db, consequent, constraints)

    def test_ubiquitous_items_give_unit_lift(self):
        a, c = Item(ItemKind.READ, "A00.."), Item(ItemKind.READ, "C00..")
        db = BasketDatabase([(f"p{j}", frozenset([a, c])) for j in range(10)])
        rules = mine_rules(db, c, MiningConstraints(0.5, 0.5, 1))
        (rule,) = rules
        assert rule.antecedent == frozenset([a])
        assert rule.confidence == 1.0
        assert rule.lift == 1.0
        assert rule.chi_squared == 0.0

    def test_no_perfect_rule_under_full_confidence(self):
        a, b, c = (Item(ItemKind.READ, f"{ch}00..") for ch in "ABC")
        db = BasketDatabase(
            [("p0", frozenset([a, c])), ("p1", frozenset([a])), ("p2", frozenset([b]))]
        )
        assert mine_rules(db, c, MiningConstraints(0.01, 1.0, 3)) == []

    def test_unknown_consequent(self, worked_store):
        from adrrefine.baskets import build_database

        db = build_database(worked_store, min_active_months=0)
        with pytest.raises(DomainError):
            mine_rules(db, Item(ItemKind.READ, "Zzz.."))

    def test_empty_database_is_an_error(self):
        with pytest.raises(DomainError):
            BasketDatabase([])

    def test_antecedents_never_contain_consequent_and_respect_bounds(self):
        rng = random.Random(37)
        for _ in range(10):
            db = random_db(rng)
            consequent = rng.choice(db.items)
            constraints = MiningConstraints(0.02, 0.05, rng.randint(1, 3))
            for r in mine_rules(db, consequent, constraints):
                assert consequent not in r.antecedent
                assert 1 <= len(r.antecedent) <= constraints.max_antecedent
                assert r.left_support >= constraints.min_left_support
                assert r.confidence >= constraints.min_confidence

    def test_worker_count_does_not_change_output(self):
        rng = random.Random(38)
        db = random_db(rng, max_baskets=200)
        consequent = db.items[0]
        constraints = MiningConstraints(0.01, 0.01, 3)
        one = mine_rules(db, consequent, constraints, workers=1)
        four = mine_rules(db, consequent, constraints, workers=4)
        assert one == four

    def test_antecedent_subsets_stay_frequent(self):
        # anti-monotonicity: every subset of an emitted antecedent clears the floor
        rng = random.Random(39)
        db = random_db(rng)
        consequent = db.items[-1]
        constraints = MiningConstraints(0.05, 0.01, 3)
        for r in mine_rules(db, consequent, constraints):
            for item in r.antecedent:
                smaller = r.antecedent - {item}
                if smaller:
                    assert db.supp(smaller) >= constraints.min_left_support


class TestMineAllRules:
    def test_equals_per_consequent_mining(self):
        rng = random.Random(40)
        db = random_db(rng, max_baskets=120, max_items=10)
        constraints = MiningConstraints(0.05, 0.05, 2)
        all_rules = mine_all_rules(db, constraints)
        for consequent in db.items:
            per = mine_rules(db, consequent, constraints)
            subset = [r for r in all_rules if r.consequent == consequent]
            assert subset == per

    def test_two_item_toy_db(self):
        a, b = Item(ItemKind.READ, "A00.."), Item(ItemKind.READ, "B00..")
        db = BasketDatabase(
            [
                ("p0", frozenset([a, b])),
                ("p1", frozenset([a, b])),
                ("p2", frozenset([a])),
                ("p3", frozenset([b])),
            ]
        )
        rules = mine_all_rules(db, MiningConstraints(0.5, 0.5, 2))
        got = {(r.antecedent, r.consequent): r for r in rules}
        assert set(got) == {(frozenset([a]), b), (frozenset([b]), a)}
        rule = got[(frozenset([a]), b)]
        assert rule.support == 0.5
        assert rule.confidence == pytest.approx(2 / 3, rel=1e-12)
        assert rule.lift == pytest.approx((2 * 4) / (3 * 3), rel=1e-12)


class TestRuleSerialization:
    def test_csv_round_trip(self, tmp_path):
        rng = random.Random(41)
        db = random_db(rng, max_baskets=100, max_items=8)
        rules = mine_all_rules(db, MiningConstraints(0.05, 0.05, 2))
        path = tmp_path / "rules.csv"
        write_rules_csv(rules, str(path))
        header = path.read_text().splitlines()[0]
        assert header == "antecedent,consequent,left_support,support,confidence,lift,chi_squared"
        loaded = read_rules_csv(str(path))
        assert {(r.antecedent, r.consequent) for r in loaded} == {
            (r.antecedent, r.consequent) for r in rules
        }
        by_key = {(r.antecedent, r.consequent): r for r in rules}
        for r in loaded:
            orig = by_key[(r.antecedent, r.consequent)]
            assert math.isclose(r.confidence, orig.confidence, rel_tol=1e-11)
            assert math.isclose(r.chi_squared, orig.chi_squared, rel_tol=1e-11)

    def test_json_round_trip(self, tmp_path):
        rng = random.Random(42)
        db = random_db(rng, max_baskets=100, max_items=8)
        rules = mine_all_rules(db, MiningConstraints(0.05, 0.05, 2))
        path = tmp_path / "rules.json"
        write_rules_json(rules, str(path))
        loaded = read_rules_json(str(path))
        assert loaded == sorted(rules, key=AssociationRule.sort_key)

    def test_rule_invariants_enforced(self):
        a, c = Item(ItemKind.READ, "A00.."), Item(ItemKind.READ, "C00..")
        with pytest.raises(DomainError):
            AssociationRule(frozenset(), c, 0.1, 0.2, 0.5, 1.0, 0.0)
        with pytest.raises(DomainError):
            AssociationRule(frozenset([c]), c, 0.1, 0.2, 0.5, 1.0, 0.0)


class TestSupp:
    def test_empty_itemset(self, worked_store):
        from adrrefine.baskets import build_database

        db = build_database(worked_store, min_active_months=0)
        assert supp([], db) == 1.0

    def test_singleton_fraction(self):
        a, b = Item(ItemKind.READ, "A00.."), Item(ItemKind.READ, "B00..")
        baskets = [("p0", frozenset([a])), ("p1", frozenset([a])), ("p2", frozenset([a, b])), ("p3", frozenset([b]))]
        db = BasketDatabase(baskets)
        assert supp([a], db) == 0.75
