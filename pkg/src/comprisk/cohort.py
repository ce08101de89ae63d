"""Cohort ingestion: wire-format parsing, eligibility screens, date split.

Encounters arrive as line-delimited JSON, one encounter object per line.
Timestamps on the wire are ISO-8601 strings; at parse time every clinical
timestamp is converted to integer minutes relative to the encounter's
admission time, so minute 0 is admission everywhere downstream.

Parsing is line-oriented and never fatal: a record that fails validation
produces one `ParseError` carrying the 1-based line number, and parsing
continues with the next line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import IO, Iterable

# Observation codes accepted on the wire. Anything else is a typo until
# proven otherwise, so unknown codes reject the whole record.
VITAL_CODES: tuple[str, ...] = (
    "systolic_bp",
    "diastolic_bp",
    "respiratory_rate",
    "pulse",
    "spo2",
    "temperature",
    "gcs",
)

LAB_CODES: tuple[str, ...] = (
    "albumin",
    "aptt",
    "bilirubin",
    "calcium",
    "chloride",
    "crp",
    "ferritin",
    "hematocrit",
    "hemoglobin",
    "inr",
    "ldh",
    "lymphocytes",
    "prothrombin_time",
    "procalcitonin",
    "sodium",
    "rbc",
    "urea",
    "uric_acid",
    "neutrophils",
)

# Analytes consumed only by outcome labeling. They never enter the feature
# schema; features.py enforces that separation at import time.
LABEL_ANALYTE_CODES: tuple[str, ...] = (
    "troponin_t",
    "d_dimer",
    "il6",
    "ast",
    "alt",
    "serum_creatinine",
    "pao2",
    "fio2",
)

KNOWN_ANALYTES: frozenset[str] = (
    frozenset(VITAL_CODES) | frozenset(LAB_CODES) | frozenset(LABEL_ANALYTE_CODES)
)

COMORBIDITY_NAMES: tuple[str, ...] = (
    "hypertension",
    "diabetes",
    "chronic_kidney_disease",
    "cancer",
)

SYMPTOM_NAMES: tuple[str, ...] = (
    "cough",
    "fever",
    "shortness_of_breath",
    "sore_throat",
    "rash",
)

CULTURE_SITES: tuple[str, ...] = ("blood", "urine", "throat", "sputum")

# Observations may precede admission by at most 24 hours (pre-admission
# draws in the emergency department); anything earlier rejects the record.
EARLIEST_OBSERVATION_MIN = -1440

ADULT_AGE_YEARS = 18


@dataclass(frozen=True)
class Observation:
    """One timestamped analyte measurement, time in minutes from admission."""

    code: str
    value: float
    time: int


@dataclass(frozen=True)
class RadiologyReport:
    """Free-text imaging report, time in minutes from admission."""

    time: int
    text: str
    modality: str = "xray"


@dataclass(frozen=True)
class CultureResult:
    """Microbiology culture with sampling and result timestamps."""

    site: str
    positive: bool
    sample_time: int
    result_time: int


@dataclass(frozen=True)
class Encounter:
    encounter_id: str
    admission_time: datetime | None
    age: int
    sex: str
    facility_region: str = "unspecified"
    bmi: float | None = None
    pregnant: bool = False
    cardiac_edema_prior: bool = False
    comorbidities: frozenset[str] = field(default_factory=frozenset)
    symptoms: frozenset[str] = field(default_factory=frozenset)
    observations: tuple[Observation, ...] = ()
    reports: tuple[RadiologyReport, ...] = ()
    cultures: tuple[CultureResult, ...] = ()

    def observations_of(self, code: str) -> tuple[Observation, ...]:
        return tuple(o for o in self.observations if o.code == code)


@dataclass(frozen=True)
class ParseError:
    line_no: int
    message: str

    def render(self) -> str:
        return f"line {self.line_no}: {self.message}"


@dataclass
class ParseResult:
    encounters: list[Encounter]
    errors: list[ParseError]


class RecordError(ValueError):
    """Raised internally while validating one wire record."""


def _require(record: dict, key: str):
    if key not in record or record[key] is None:
        raise RecordError(f"missing required field '{key}'")
    return record[key]


def _parse_stamp(raw, what: str) -> datetime:
    if not isinstance(raw, str):
        raise RecordError(f"{what} must be an ISO-8601 string")
    try:
        return datetime.fromisoformat(raw)
    except ValueError as exc:
        raise RecordError(f"{what} is not ISO-8601: {raw!r}") from exc


def _minutes_from(admission: datetime, raw, what: str) -> int:
    stamp = _parse_stamp(raw, what)
    return int(round((stamp - admission).total_seconds() / 60.0))


def _parse_value(raw, what: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise RecordError(f"{what} must be a number")
    value = float(raw)
    if not math.isfinite(value):
        raise RecordError(f"{what} must be finite")
    return value


def _parse_observation(entry: dict, admission: datetime, idx: int) -> Observation:
    code = _require(entry, "code")
    if code not in KNOWN_ANALYTES:
        raise RecordError(f"unknown analyte code '{code}' (observation {idx})")
    value = _parse_value(_require(entry, "value"), f"observation {idx} value")
    minute = _minutes_from(admission, _require(entry, "time"), f"observation {idx} time")
    if minute < EARLIEST_OBSERVATION_MIN:
        raise RecordError(
            f"observation {idx} precedes admission by more than 1440 minutes"
        )
    return Observation(code=code, value=value, time=minute)


def _parse_report(entry: dict, admission: datetime, idx: int) -> RadiologyReport:
    text = _require(entry, "text")
    if not isinstance(text, str) or not text.strip():
        raise RecordError(f"report {idx} has empty text")
    minute = _minutes_from(admission, _require(entry, "time"), f"report {idx} time")
    modality = entry.get("modality", "xray")
    return RadiologyReport(time=minute, text=text, modality=str(modality))


def _parse_culture(entry: dict, admission: datetime, idx: int) -> CultureResult:
    site = _require(entry, "site")
    if site not in CULTURE_SITES:
        raise RecordError(f"unknown culture site '{site}' (culture {idx})")
    positive = _require(entry, "positive")
    if not isinstance(positive, bool):
        raise RecordError(f"culture {idx} 'positive' must be a boolean")
    sample = _minutes_from(admission, _require(entry, "sample_time"), f"culture {idx} sample_time")
    result = _minutes_from(admission, _require(entry, "result_time"), f"culture {idx} result_time")
    if result < sample:
        raise RecordError(f"culture {idx} result_time precedes sample_time")
    return CultureResult(site=site, positive=positive, sample_time=sample, result_time=result)


def _parse_record(record: dict) -> Encounter:
    encounter_id = str(_require(record, "encounter_id"))
    admission = _parse_stamp(_require(record, "admission_time"), "admission_time")

    age_raw = _require(record, "age")
    if isinstance(age_raw, bool) or not isinstance(age_raw, int):
        raise RecordError("age must be an integer")
    if age_raw < 0:
        raise RecordError("age must be non-negative")

    sex = str(_require(record, "sex")).lower()
    if sex not in ("male", "female"):
        raise RecordError(f"sex must be 'male' or 'female', got {sex!r}")

    bmi = record.get("bmi")
    if bmi is not None:
        bmi = _parse_value(bmi, "bmi")
        if bmi <= 0:
            raise RecordError("bmi must be positive")

    for flag in ("pregnant", "cardiac_edema_prior"):
        if flag in record and not isinstance(record[flag], bool):
            raise RecordError(f"{flag} must be a boolean")

    observations = tuple(
        _parse_observation(entry, admission, i)
        for i, entry in enumerate(record.get("observations", ()))
    )
    reports = tuple(
        _parse_report(entry, admission, i)
        for i, entry in enumerate(record.get("reports", ()))
    )
    cultures = tuple(
        _parse_culture(entry, admission, i)
        for i, entry in enumerate(record.get("cultures", ()))
    )

    return Encounter(
        encounter_id=encounter_id,
        admission_time=admission,
        age=age_raw,
        sex=sex,
        facility_region=str(record.get("facility_region", "unspecified")),
        bmi=bmi,
        pregnant=bool(record.get("pregnant", False)),
        cardiac_edema_prior=bool(record.get("cardiac_edema_prior", False)),
        comorbidities=frozenset(str(c) for c in record.get("comorbidities", ())),
        symptoms=frozenset(str(s) for s in record.get("symptoms", ())),
        observations=tuple(sorted(observations, key=lambda o: o.time)),
        reports=tuple(sorted(reports, key=lambda r: r.time)),
        cultures=tuple(sorted(cultures, key=lambda c: c.sample_time)),
    )


def parse_encounter_lines(lines: Iterable[str]) -> ParseResult:
    """Parse line-delimited JSON encounters.

    Returns every syntactically valid encounter in input order plus one
    error entry per rejected line. Blank lines are skipped. Duplicate
    encounter ids are rejected (later line loses).
    """
    encounters: list[Encounter] = []
    errors: list[ParseError] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            errors.append(ParseError(line_no, f"malformed JSON: {exc.msg}"))
            continue
        if not isinstance(record, dict):
            errors.append(ParseError(line_no, "record is not a JSON object"))
            continue
        try:
            encounter = _parse_record(record)
        except RecordError as exc:
            errors.append(ParseError(line_no, str(exc)))
            continue
        if encounter.encounter_id in seen_ids:
            errors.append(
                ParseError(line_no, f"duplicate encounter_id '{encounter.encounter_id}'")
            )
            continue
        seen_ids.add(encounter.encounter_id)
        encounters.append(encounter)
    return ParseResult(encounters=encounters, errors=errors)


def parse_encounters(stream: IO[str]) -> ParseResult:
    return parse_encounter_lines(stream)


def parse_encounters_path(path) -> ParseResult:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_encounters(handle)


# -- eligibility ------------------------------------------------------------

EXCLUSION_NON_ADULT = "non-adult"
EXCLUSION_PREGNANT = "pregnant"


def apply_cohort_exclusions(
    encounters: Iterable[Encounter],
) -> tuple[list[Encounter], list[tuple[Encounter, str]]]:
    """Screen out non-adult and pregnant encounters.

    Returns (kept, excluded) where excluded pairs each encounter with the
    first matching reason (non-adult checked before pregnant). Idempotent:
    re-screening the kept list removes nothing.
    """
    kept: list[Encounter] = []
    excluded: list[tuple[Encounter, str]] = []
    for enc in encounters:
        if enc.age < ADULT_AGE_YEARS:
            excluded.append((enc, EXCLUSION_NON_ADULT))
        elif enc.pregnant:
            excluded.append((enc, EXCLUSION_PREGNANT))
        else:
            kept.append(enc)
    return kept, excluded


# -- train/test split -------------------------------------------------------


@dataclass
class CohortSplit:
    region: str
    train: list[Encounter]
    test: list[Encounter]
    excluded: list[tuple[Encounter, str]]


def split_train_test(
    encounters: Iterable[Encounter], cutoff: date
) -> dict[str, CohortSplit]:
    """Split each facility region by admission date.

    Admissions on or before `cutoff` go to train, later ones to test.
    Input order is preserved within each bucket. An encounter without an
    admission time cannot be assigned and lands in `excluded`.
    """
    splits: dict[str, CohortSplit] = {}
    for enc in encounters:
        split = splits.setdefault(
            enc.facility_region,
            CohortSplit(region=enc.facility_region, train=[], test=[], excluded=[]),
        )
        if enc.admission_time is None:
            split.excluded.append((enc, "missing admission date"))
        elif enc.admission_time.date() <= cutoff:
            split.train.append(enc)
        else:
            split.test.append(enc)
    return splits
