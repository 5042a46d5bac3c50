import datetime as dt
import json
import random

import pytest

from adrrefine.codes import parse_bnf, parse_read
from adrrefine.errors import ConfigError, ParseError
from adrrefine.events import EventRecord, load
from adrrefine.signals import (
    SignalInstance,
    SignalSpec,
    ab_ratio,
    doi_matches,
    exposure_count,
    find_instances,
    first_doi_date,
    hoi_matches,
    load_signal_spec,
    read_instances_csv,
    write_instances_csv,
)

from conftest import write_cohort

DOI = frozenset([parse_bnf("1.1.0.0")])


def make_spec(**kwargs) -> SignalSpec:
    defaults = dict(doi=DOI, hoi=parse_read("H05.."), window=(1, 60))
    defaults.update(kwargs)
    return SignalSpec(**defaults)


class TestSpecValidation:
    def test_window_must_start_at_one(self):
        with pytest.raises(ConfigError):
            make_spec(window=(0, 60))

    def test_window_order(self):
        with pytest.raises(ConfigError):
            make_spec(window=(10, 5))

    def test_doi_must_be_nonempty(self):
        with pytest.raises(ConfigError):
            make_spec(doi=frozenset())

    def test_load_from_json(self, worked_example_dir):
        spec = load_signal_spec(str(worked_example_dir / "signal.json"))
        assert spec.doi == DOI
        assert str(spec.hoi) == "H05.."
        assert spec.window == (1, 60)
        assert spec.label == "HOI5"

    def test_load_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"hoi_code": "H05.."}))
        with pytest.raises(ParseError):
            load_signal_spec(str(path))


class TestHoiMatching:
    def test_exact_match(self):
        rec = EventRecord("p", dt.date(2020, 1, 1), "READ", "B572.")
        assert hoi_matches(rec, parse_read("B572."))

    def test_descendant_matches(self):
        rec = EventRecord("p", dt.date(2020, 1, 1), "READ", "B572z")
        assert hoi_matches(rec, parse_read("B572."))

    def test_ancestor_does_not_match(self):
        rec = EventRecord("p", dt.date(2020, 1, 1), "READ", "B57..")
        assert not hoi_matches(rec, parse_read("B572."))

    def test_prescriptions_never_match(self):
        rec = EventRecord("p", dt.date(2020, 1, 1), "BNF", "1.1.0.0")
        assert not hoi_matches(rec, parse_read("B572."))

    def test_level_three_query_catches_family(self):
        for code in ("AB2..", "AB21.", "AB2zz"):
            rec = EventRecord("p", dt.date(2020, 1, 1), "READ", code)
            assert hoi_matches(rec, parse_read("AB2.."))


class TestDoiMatching:
    def test_family_entry_matches_descendants(self):
        family = frozenset([parse_bnf("1.1.0.0")])
        assert doi_matches(parse_bnf("1.1.2.3"), family)
        assert doi_matches(parse_bnf("1.1.0.0"), family)
        assert not doi_matches(parse_bnf("1.2.0.0"), family)

    def test_exact_entry_matches_one_code(self):
        exact = frozenset([parse_bnf("1.1.2.3")])
        assert doi_matches(parse_bnf("1.1.2.3"), exact)
        assert not doi_matches(parse_bnf("1.1.2.4"), exact)
        assert not doi_matches(parse_bnf("1.1.0.0"), exact)


class TestFirstDoiDate:
    def test_worked_example_patient_one(self, worked_store):
        assert first_doi_date(worked_store, "1", DOI) == dt.date(2003, 6, 5)

    def test_never_prescribed(self, tmp_path):
        patients, events = write_cohort(
            tmp_path, ["p1,M,1950,2000-01-01"], ["p1,2001-01-01,READ,A11.."]
        )
        assert first_doi_date(load(patients, events), "p1", DOI) is None

    def test_earliest_of_two(self, tmp_path):
        patients, events = write_cohort(
            tmp_path,
            ["p1,M,1950,2000-01-01"],
            ["p1,2003-01-01,BNF,1.1.2.0", "p1,2001-06-01,BNF,1.1.0.0"],
        )
        assert first_doi_date(load(patients, events), "p1", DOI) == dt.date(2001, 6, 1)


class TestAbRatio:
    def test_worked_example(self, worked_store):
        res = ab_ratio(make_spec(), worked_store)
        assert (res.after_count, res.before_count) == (3, 0)
        assert res.ratio == 3.0

    def test_zero_before_keeps_after_count(self, tmp_path):
        rows = []
        for i in range(5):
            rows.append(f"p{i},2005-01-01,BNF,1.1.0.0")
            rows.append(f"p{i},2005-01-15,READ,H05..")
        patients, events = write_cohort(
            tmp_path, [f"p{i},M,1950,2000-01-01" for i in range(5)], rows
        )
        res = ab_ratio(make_spec(), load(patients, events))
        assert (res.after_count, res.before_count, res.ratio) == (5, 0, 5.0)

    def test_simple_division(self, tmp_path):
        rows = []
        patients_rows = []
        for i in range(10):
            patients_rows.append(f"a{i},M,1950,2000-01-01")
            rows.append(f"a{i},2005-01-10,BNF,1.1.0.0")
            rows.append(f"a{i},2005-01-20,READ,H05..")
        for i in range(5):
            patients_rows.append(f"b{i},M,1950,2000-01-01")
            rows.append(f"b{i},2005-01-20,BNF,1.1.0.0")
            rows.append(f"b{i},2005-01-10,READ,H05..")
        res = ab_ratio(make_spec(), load(*write_cohort(tmp_path, patients_rows, rows)))
        assert (res.after_count, res.before_count, res.ratio) == (10, 5, 2.0)

    def test_unprescribed_doi(self, worked_store):
        res = ab_ratio(make_spec(doi=frozenset([parse_bnf("9.9.0.0")])), worked_store)
        assert (res.after_count, res.before_count, res.ratio) == (0, 0, 0.0)

    def test_matches_day_scan_oracle(self, worked_store, tmp_path):
        rng = random.Random(50)
        patients_rows = [f"p{i},M,1950,2000-01-01" for i in range(40)]
        rows = []
        base = dt.date(2004, 1, 1)
        for i in range(40):
            for _ in range(rng.randint(0, 4)):
                d = base + dt.timedelta(days=rng.randint(0, 900))
                rows.append(f"p{i},{d},BNF,1.1.{rng.randint(0, 3)}.0".replace(".0.0", ".0.0"))
            for _ in range(rng.randint(0, 4)):
                d = base + dt.timedelta(days=rng.randint(0, 900))
                rows.append(f"p{i},{d},READ,H05{rng.choice('.z')}.".replace("..", ".."))
        store = load(*write_cohort(tmp_path, patients_rows, rows))
        spec = make_spec()
        res = ab_ratio(spec, store)

        # Oracle: walk every day offset in the window per distinct prescription.
        after = before = 0
        for pid in store.patients:
            events = store.patient_events(pid)
            hoi_days = {e.date for e in events if hoi_matches(e, spec.hoi)}
            seen = set()
            for e in events:
                if e.code_type != "BNF" or not doi_matches(parse_bnf(e.code), spec.doi):
                    continue
                key = (e.date, str(parse_bnf(e.code).parts[:2]))
                if key in seen:
                    continue
                seen.add(key)
                offsets = range(spec.window[0], spec.window[1] + 1)
                if any(e.date + dt.timedelta(days=k) in hoi_days for k in offsets):
                    after += 1
                if any(e.date - dt.timedelta(days=k) in hoi_days for k in offsets):
                    before += 1
        assert (res.after_count, res.before_count) == (after, before)


class TestFindInstances:
    def test_worked_example_window_hits(self, worked_store):
        instances = find_instances(make_spec(), worked_store)
        assert instances == [
            SignalInstance("2", dt.date(2001, 6, 28), dt.date(2001, 8, 14)),
            SignalInstance("3", dt.date(2010, 3, 21), dt.date(2010, 3, 22)),
            SignalInstance("4", dt.date(2011, 1, 1), dt.date(2011, 1, 5)),
        ]

    def test_same_day_outcome_not_an_instance(self, tmp_path):
        patients, events = write_cohort(
            tmp_path,
            ["p1,M,1950,2000-01-01"],
            ["p1,2005-01-01,BNF,1.1.0.0", "p1,2005-01-01,READ,H05.."],
        )
        assert find_instances(make_spec(), load(patients, events)) == []

    def test_outcome_past_window_end(self, tmp_path):
        patients, events = write_cohort(
            tmp_path,
            ["p1,M,1950,2000-01-01"],
            ["p1,2005-01-01,BNF,1.1.0.0", "p1,2005-03-03,READ,H05.."],  # gap 61
        )
        assert find_instances(make_spec(), load(patients, events)) == []

    def test_earliest_qualifying_outcome_wins(self, tmp_path):
        patients, events = write_cohort(
            tmp_path,
            ["p1,M,1950,2000-01-01"],
            [
                "p1,2005-01-01,BNF,1.1.0.0",
                "p1,2005-01-20,READ,H05..",
                "p1,2005-02-10,READ,H05..",
            ],
        )
        (inst,) = find_instances(make_spec(), load(patients, events))
        assert inst.hoi_date == dt.date(2005, 1, 20)

    def test_window_widening_only_adds(self, worked_store):
        narrow = set(find_instances(make_spec(window=(1, 10)), worked_store))
        wide = set(find_instances(make_spec(window=(1, 60)), worked_store))
        assert narrow <= wide

    def test_instances_satisfy_window_invariant(self, worked_store):
        spec = make_spec(window=(1, 30))
        for inst in find_instances(spec, worked_store):
            gap = (inst.hoi_date - inst.doi_date).days
            assert spec.window[0] <= gap <= spec.window[1]

    def test_instance_count_bounded_by_exposure(self, worked_store):
        spec = make_spec()
        assert len(find_instances(spec, worked_store)) <= exposure_count(spec.doi, worked_store)


class TestExposureCount:
    def test_worked_example_all_prescribed(self, worked_store):
        assert exposure_count(DOI, worked_store) == 4

    def test_no_prescriptions(self, worked_store):
        assert exposure_count(frozenset([parse_bnf("9.9.0.0")]), worked_store) == 0


class TestInstancesFile:
    def test_round_trip(self, tmp_path, worked_store):
        instances = find_instances(make_spec(), worked_store)
        path = tmp_path / "instances.csv"
        write_instances_csv(instances, str(path))
        assert read_instances_csv(str(path)) == instances

    def test_fixture_file(self, worked_example_dir):
        instances = read_instances_csv(str(worked_example_dir / "instances.csv"))
        assert len(instances) == 4
        assert instances[0] == SignalInstance("1", dt.date(2003, 6, 5), dt.date(2005, 8, 1))

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "instances.csv"
        path.write_text("patient_id,doi_date,hoi_date\np1,2005-01-01\n")
        with pytest.raises(ParseError, match=":2:"):
            read_instances_csv(str(path))
