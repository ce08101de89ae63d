"""Wire parsing, eligibility screens and the dated split."""

import json
from datetime import date, datetime

import pytest

from comprisk.cohort import (
    Encounter,
    apply_cohort_exclusions,
    parse_encounter_lines,
    split_train_test,
)


def record(**overrides) -> dict:
    base = {
        "encounter_id": "e1",
        "admission_time": "2020-04-10T08:00",
        "age": 60,
        "sex": "female",
    }
    base.update(overrides)
    return base


def parse_one(rec: dict):
    return parse_encounter_lines([json.dumps(rec)])


def test_minimal_record_parses():
    result = parse_one(record())
    assert not result.errors
    enc = result.encounters[0]
    assert enc.encounter_id == "e1"
    assert enc.age == 60
    assert enc.facility_region == "unspecified"
    assert enc.bmi is None and not enc.pregnant


def test_timestamps_become_minutes_from_admission():
    rec = record(observations=[
        {"code": "crp", "value": 55.5, "time": "2020-04-10T09:30"},
        {"code": "spo2", "value": 94, "time": "2020-04-09T08:00"},
    ])
    enc = parse_one(rec).encounters[0]
    assert [o.time for o in enc.observations] == [-1440, 90]
    assert enc.observations[1].value == 55.5


def test_observation_seconds_round_to_nearest_minute():
    rec = record(observations=[{"code": "crp", "value": 1, "time": "2020-04-10T08:00:31"}])
    enc = parse_one(rec).encounters[0]
    assert enc.observations[0].time == 1


@pytest.mark.parametrize(
    "mutation",
    [
        {"encounter_id": None},
        {"admission_time": None},
        {"admission_time": "not-a-date"},
        {"age": None},
        {"age": -1},
        {"age": 60.5},
        {"age": True},
        {"sex": "other"},
        {"bmi": -3},
        {"bmi": "heavy"},
        {"pregnant": "yes"},
        {"cardiac_edema_prior": 1},
    ],
)
def test_bad_demographics_reject_the_line(mutation):
    result = parse_one(record(**mutation))
    assert not result.encounters
    assert len(result.errors) == 1
    assert result.errors[0].line_no == 1


@pytest.mark.parametrize(
    "observation",
    [
        {"code": "mystery", "value": 1, "time": "2020-04-10T09:00"},
        {"code": "crp", "value": "high", "time": "2020-04-10T09:00"},
        {"code": "crp", "value": float("nan"), "time": "2020-04-10T09:00"},
        {"code": "crp", "value": 1, "time": "2020-04-09T07:59"},
        {"code": "crp", "value": 1},
    ],
)
def test_bad_observations_reject_the_line(observation):
    result = parse_one(record(observations=[observation]))
    assert not result.encounters
    assert len(result.errors) == 1


def test_culture_result_before_sample_rejects():
    rec = record(cultures=[{
        "site": "blood", "positive": True,
        "sample_time": "2020-04-10T12:00", "result_time": "2020-04-10T11:00",
    }])
    result = parse_one(rec)
    assert not result.encounters and "precedes" in result.errors[0].message


def test_unknown_culture_site_rejects():
    rec = record(cultures=[{
        "site": "skin", "positive": True,
        "sample_time": "2020-04-10T12:00", "result_time": "2020-04-10T13:00",
    }])
    assert not parse_one(rec).encounters


def test_empty_report_text_rejects():
    rec = record(reports=[{"text": "   ", "time": "2020-04-10T12:00"}])
    assert not parse_one(rec).encounters


def test_malformed_json_and_non_object_lines_are_counted():
    lines = ["{not json", json.dumps([1, 2]), json.dumps(record())]
    result = parse_encounter_lines(lines)
    assert len(result.encounters) == 1
    assert [e.line_no for e in result.errors] == [1, 2]


def test_duplicate_encounter_id_keeps_first():
    lines = [json.dumps(record(age=50)), json.dumps(record(age=70))]
    result = parse_encounter_lines(lines)
    assert len(result.encounters) == 1
    assert result.encounters[0].age == 50
    assert "duplicate" in result.errors[0].message


def test_blank_lines_are_skipped():
    result = parse_encounter_lines(["", "  ", json.dumps(record())])
    assert len(result.encounters) == 1 and not result.errors


def test_parse_never_stops_at_bad_lines():
    lines = [
        json.dumps(record(encounter_id="a")),
        "garbage",
        json.dumps(record(encounter_id="b", age=-4)),
        json.dumps(record(encounter_id="c")),
    ]
    result = parse_encounter_lines(lines)
    assert [e.encounter_id for e in result.encounters] == ["a", "c"]
    assert [e.line_no for e in result.errors] == [2, 3]


def test_observations_sorted_by_time():
    rec = record(observations=[
        {"code": "crp", "value": 2, "time": "2020-04-10T12:00"},
        {"code": "crp", "value": 1, "time": "2020-04-10T09:00"},
    ])
    enc = parse_one(rec).encounters[0]
    assert [o.value for o in enc.observations] == [1, 2]


def _adult(eid="x", age=30, pregnant=False):
    return Encounter(
        encounter_id=eid, admission_time=datetime(2020, 4, 1), age=age,
        sex="female", pregnant=pregnant,
    )


def test_screens_age_before_pregnancy():
    kept, excluded = apply_cohort_exclusions([
        _adult("ok"),
        _adult("minor", age=17),
        _adult("preg", pregnant=True),
        _adult("both", age=16, pregnant=True),
    ])
    assert [e.encounter_id for e in kept] == ["ok"]
    assert [(e.encounter_id, r) for e, r in excluded] == [
        ("minor", "non-adult"), ("preg", "pregnant"), ("both", "non-adult"),
    ]


def test_screens_age_18_is_adult():
    kept, excluded = apply_cohort_exclusions([_adult(age=18)])
    assert kept and not excluded


def test_screens_are_idempotent():
    kept, _ = apply_cohort_exclusions([_adult("a"), _adult("b", age=12)])
    kept2, excluded2 = apply_cohort_exclusions(kept)
    assert kept2 == kept and not excluded2


def _dated(eid, day, region="north"):
    return Encounter(
        encounter_id=eid, admission_time=datetime(2020, 4, day, 23, 59),
        age=40, sex="male", facility_region=region,
    )


def test_split_cutoff_day_goes_to_train():
    splits = split_train_test(
        [_dated("a", 24), _dated("b", 25), _dated("c", 26)], date(2020, 4, 25)
    )
    north = splits["north"]
    assert [e.encounter_id for e in north.train] == ["a", "b"]
    assert [e.encounter_id for e in north.test] == ["c"]


def test_split_groups_by_region():
    splits = split_train_test(
        [_dated("a", 10, "north"), _dated("b", 28, "south")], date(2020, 4, 25)
    )
    assert set(splits) == {"north", "south"}
    assert splits["north"].train and not splits["north"].test
    assert splits["south"].test and not splits["south"].train


def test_split_missing_admission_is_excluded():
    enc = Encounter(encounter_id="m", admission_time=None, age=40, sex="male")
    splits = split_train_test([enc], date(2020, 4, 25))
    bucket = splits["unspecified"]
    assert not bucket.train and not bucket.test
    assert bucket.excluded[0][1] == "missing admission date"
