"""Deterministic synthetic cohort generator.

Produces wire-format encounter records whose complication events are
injected through the same raw signals the labeler reads: threshold labs,
culture rows, creatinine series, blood-gas pairs and free-text imaging
reports. One complication (the planted one) occurs with probability given
by a logistic model over realized baseline features, so a trained model
has real signal to find; a second (the null one) occurs by a coin flip
independent of every feature, so its discrimination should hover at
chance. The remaining complications get small background rates to keep
the labeler and the exclusion accounting exercised.

Every random draw comes from a generator seeded by (spec seed, stream,
encounter index), so output is byte-identical across runs and any single
encounter is reproducible in isolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .labeler import Complication

ADMISSION_FIRST_DAY = datetime(2020, 4, 1)
ADMISSION_DAY_SPAN = 30
REGIONS = ("north", "south")

POSITIVE_REPORT_TEMPLATES = (
    "Portable chest radiograph shows bilateral airspace opacities.",
    "Diffuse ground glass changes in both lungs.",
    "Extensive consolidation seen bilaterally.",
    "Findings consistent with ards.",
)
NEGATIVE_REPORT_TEMPLATES = (
    "No focal opacity identified.",
    "Clear lungs with no infiltrate or consolidation.",
    "Mild cardiomegaly without acute airspace disease.",
    "Lines and tubes in standard position.",
)

# Planted-signal coefficients over standardized baseline features. The
# standardization constants are the generating means and spreads below.
SIGNAL_WEIGHTS = {
    "age": 1.3,
    "crp": 1.2,
    "spo2": -1.2,
    "ldh": 0.9,
    "urea": 0.7,
}
SIGNAL_MOMENTS = {
    "age": (62.0, 16.0),
    "crp": (80.0, 55.0),
    "spo2": (93.0, 4.0),
    "ldh": (320.0, 110.0),
    "urea": (45.0, 22.0),
}

# Background event rates for complications that are neither planted nor null.
BACKGROUND_RATES = {
    Complication.ELEVATED_IL6: 0.05,
    Complication.ELEVATED_AMINOTRANSFERASES: 0.05,
    Complication.SBI: 0.06,
    Complication.AKI: 0.06,
    Complication.ARDS: 0.05,
}
BACKGROUND_WITHIN_24H = {
    Complication.ELEVATED_IL6: 0.3,
    Complication.ELEVATED_AMINOTRANSFERASES: 0.2,
    Complication.SBI: 0.2,
    Complication.AKI: 0.0,
    Complication.ARDS: 0.0,
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for one synthetic cohort draw."""

    n_encounters: int = 3000
    seed: int = 0
    planted: Complication = Complication.ELEVATED_TROPONIN
    null: Complication = Complication.ELEVATED_DDIMER
    planted_prevalence: float = 0.3
    null_rate: float = 0.25
    within_24h_fraction: float = 0.15

    def __post_init__(self):
        if self.n_encounters < 1:
            raise ValueError("n_encounters must be >= 1")
        if self.planted == self.null:
            raise ValueError("planted and null complications must differ")
        if not 0.0 < self.planted_prevalence < 1.0:
            raise ValueError("planted_prevalence must be in (0, 1)")
        if not 0.0 < self.null_rate < 1.0:
            raise ValueError("null_rate must be in (0, 1)")
        if not 0.0 <= self.within_24h_fraction < 1.0:
            raise ValueError("within_24h_fraction must be in [0, 1)")


def _stream_rng(spec: SyntheticSpec, stream: str, index: int) -> np.random.Generator:
    # hash() is salted per process; derive the stream id statically instead
    stream_id = sum(ord(c) * 131**k for k, c in enumerate(stream)) % (2**31)
    return np.random.default_rng([spec.seed, stream_id, index])


@dataclass
class _Profile:
    """Baseline draw for one encounter, before event injection."""

    age: int
    sex: str
    pregnant: bool
    region: str
    admission: datetime
    bmi: float | None
    cardiac_edema_prior: bool
    comorbidities: list[str]
    symptoms: list[str]
    bases: dict[str, float]
    linear_predictor: float


def _draw_profile(spec: SyntheticSpec, i: int) -> _Profile:
    rng = _stream_rng(spec, "profile", i)
    if i % 97 == 13:
        age = int(rng.integers(10, 18))
    else:
        age = int(np.clip(round(rng.normal(62.0, 16.0)), 18, 96))
    sex = "female" if (i % 113 == 29 or rng.random() < 0.45) else "male"
    pregnant = bool(i % 113 == 29 and 18 <= age <= 45)
    region = REGIONS[int(rng.random() < 0.5)]
    day = int(rng.integers(0, ADMISSION_DAY_SPAN))
    admission = ADMISSION_FIRST_DAY + timedelta(
        days=day, hours=int(rng.integers(0, 24)), minutes=int(rng.integers(0, 60))
    )
    bmi = None if rng.random() < 0.1 else float(np.clip(rng.normal(28.0, 5.5), 15.0, 55.0))

    comorbidities = [
        name
        for name, p in (
            ("hypertension", 0.40),
            ("diabetes", 0.25),
            ("chronic_kidney_disease", 0.08),
            ("cancer", 0.07),
        )
        if rng.random() < p
    ]
    symptoms = [
        name
        for name, p in (
            ("cough", 0.60),
            ("fever", 0.55),
            ("shortness_of_breath", 0.50),
            ("sore_throat", 0.20),
            ("rash", 0.03),
        )
        if rng.random() < p
    ]

    bases = {
        "age": float(age),
        "crp": float(np.clip(rng.normal(80.0, 55.0), 1.0, 350.0)),
        "spo2": float(np.clip(rng.normal(93.0, 4.0), 70.0, 100.0)),
        "ldh": float(np.clip(rng.normal(320.0, 110.0), 80.0, 900.0)),
        "urea": float(np.clip(rng.normal(45.0, 22.0), 5.0, 180.0)),
    }
    lp = 0.0
    for name, weight in SIGNAL_WEIGHTS.items():
        mean, sd = SIGNAL_MOMENTS[name]
        lp += weight * (bases[name] - mean) / sd

    return _Profile(
        age=age,
        sex=sex,
        pregnant=pregnant,
        region=region,
        admission=admission,
        bmi=bmi,
        cardiac_edema_prior=bool(rng.random() < 0.04),
        comorbidities=comorbidities,
        symptoms=symptoms,
        bases=bases,
        linear_predictor=lp,
    )


def _solve_intercept(linear_predictors: np.ndarray, target: float) -> float:
    """Bisect the intercept so mean predicted probability hits the target."""
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        z = np.clip(mid + linear_predictors, -500.0, 500.0)
        mean_p = float(np.mean(1.0 / (1.0 + np.exp(-z))))
        if mean_p < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _stamp(admission: datetime, minute: int) -> str:
    return (admission + timedelta(minutes=int(minute))).isoformat(timespec="minutes")


class _RecordBuilder:
    def __init__(self, profile: _Profile, encounter_id: str):
        self.profile = profile
        self.encounter_id = encounter_id
        self.observations: list[dict] = []
        self.reports: list[dict] = []
        self.cultures: list[dict] = []

    def obs(self, code: str, value: float, minute: int) -> None:
        self.observations.append(
            {
                "code": code,
                "value": round(float(value), 4),
                "time": _stamp(self.profile.admission, minute),
            }
        )

    def report(self, text: str, minute: int) -> None:
        self.reports.append({"text": text, "time": _stamp(self.profile.admission, minute)})

    def culture(self, site: str, positive: bool, sample_minute: int, result_minute: int) -> None:
        self.cultures.append(
            {
                "site": site,
                "positive": positive,
                "sample_time": _stamp(self.profile.admission, sample_minute),
                "result_time": _stamp(self.profile.admission, result_minute),
            }
        )

    def record(self) -> dict:
        p = self.profile
        rec = {
            "encounter_id": self.encounter_id,
            "admission_time": p.admission.isoformat(timespec="minutes"),
            "age": p.age,
            "sex": p.sex,
            "facility_region": p.region,
            "pregnant": p.pregnant,
            "cardiac_edema_prior": p.cardiac_edema_prior,
            "comorbidities": sorted(p.comorbidities),
            "symptoms": sorted(p.symptoms),
            "observations": self.observations,
            "reports": self.reports,
            "cultures": self.cultures,
        }
        if p.bmi is not None:
            rec["bmi"] = round(p.bmi, 1)
        return rec


def _emit_baseline_series(builder: _RecordBuilder, rng: np.random.Generator) -> None:
    """First-day vitals and labs around the profile's base values."""
    bases = builder.profile.bases
    vitals = (
        ("systolic_bp", rng.normal(125.0, 18.0), 6.0),
        ("diastolic_bp", rng.normal(75.0, 12.0), 4.0),
        ("respiratory_rate", rng.normal(22.0, 5.0), 1.5),
        ("pulse", rng.normal(92.0, 16.0), 5.0),
        ("spo2", bases["spo2"], 0.8),
        ("temperature", rng.normal(37.6, 0.8), 0.2),
        ("gcs", float(rng.choice([15] * 8 + [14, 13])), 0.0),
    )
    for code, center, wiggle in vitals:
        n_samples = int(rng.integers(4, 7))
        for minute in sorted(rng.integers(10, 1430, size=n_samples).tolist()):
            value = center + (rng.normal(0.0, wiggle) if wiggle else 0.0)
            if code == "spo2":
                value = min(value, 100.0)
            builder.obs(code, value, minute)

    labs = (
        ("albumin", 0.80, rng.normal(3.4, 0.5), 1.0),
        ("aptt", 0.60, rng.normal(32.0, 6.0), 12.0),
        ("bilirubin", 0.70, max(rng.normal(0.9, 0.4), 0.2), 0.2),
        ("calcium", 0.80, rng.normal(9.0, 0.7), 3.0),
        ("chloride", 0.80, rng.normal(102.0, 4.0), 60.0),
        ("crp", 1.00, bases["crp"], 1.0),
        ("ferritin", 0.60, max(rng.normal(600.0, 300.0), 30.0), 30.0),
        ("hematocrit", 0.90, rng.normal(40.0, 5.0), 10.0),
        ("hemoglobin", 0.90, rng.normal(13.2, 1.8), 4.0),
        ("inr", 0.60, max(rng.normal(1.1, 0.15), 0.8), 0.8),
        ("ldh", 0.95, bases["ldh"], 80.0),
        ("lymphocytes", 0.90, max(rng.normal(1.1, 0.5), 0.1), 0.1),
        ("prothrombin_time", 0.60, rng.normal(13.5, 1.5), 9.0),
        ("procalcitonin", 0.50, abs(rng.normal(0.3, 0.5)) + 0.01, 0.01),
        ("sodium", 0.90, rng.normal(138.0, 4.0), 110.0),
        ("rbc", 0.80, rng.normal(4.5, 0.6), 2.0),
        ("urea", 0.95, bases["urea"], 3.0),
        ("uric_acid", 0.40, rng.normal(5.2, 1.4), 1.0),
        ("neutrophils", 0.85, rng.normal(6.5, 2.5), 0.5),
    )
    noise = {"crp": 6.0, "ldh": 15.0, "urea": 3.0}
    for code, presence, center, floor in labs:
        if rng.random() >= presence:
            continue
        n_samples = int(rng.integers(1, 3))
        for k in range(n_samples):
            if k == 0 and rng.random() < 0.15:
                minute = -int(rng.integers(10, 600))  # emergency-department draw
            else:
                minute = int(rng.integers(30, 1350))
            value = max(center + rng.normal(0.0, noise.get(code, 0.0)), floor)
            builder.obs(code, value, minute)


def _event_onset(rng: np.random.Generator, within_24h_fraction: float) -> int:
    if rng.random() < within_24h_fraction:
        return int(rng.integers(60, 1441))
    return int(rng.integers(1441, 7200))


def _inject_threshold_event(
    builder: _RecordBuilder,
    rng: np.random.Generator,
    complication: Complication,
    occurred: bool,
    onset: int | None,
) -> None:
    if complication is Complication.ELEVATED_TROPONIN:
        if occurred:
            if onset > 120 and rng.random() < 0.5:
                builder.obs("troponin_t", rng.uniform(1.0, 10.0), int(rng.integers(30, onset)))
            builder.obs("troponin_t", rng.uniform(20.0, 120.0), onset)
        elif rng.random() < 0.5:
            builder.obs("troponin_t", rng.uniform(1.0, 10.0), int(rng.integers(30, 2000)))
    elif complication is Complication.ELEVATED_DDIMER:
        if occurred:
            builder.obs("d_dimer", rng.uniform(600.0, 4000.0), onset)
        elif rng.random() < 0.5:
            builder.obs("d_dimer", rng.uniform(80.0, 420.0), int(rng.integers(30, 2000)))
    elif complication is Complication.ELEVATED_IL6:
        if occurred:
            builder.obs("il6", rng.uniform(10.0, 80.0), onset)
        elif rng.random() < 0.3:
            builder.obs("il6", rng.uniform(0.5, 6.0), int(rng.integers(30, 2000)))
    elif complication is Complication.ELEVATED_AMINOTRANSFERASES:
        if occurred:
            builder.obs("ast", rng.uniform(45.0, 300.0), onset)
            builder.obs("alt", rng.uniform(45.0, 300.0), onset)
        elif rng.random() < 0.4:
            minute = int(rng.integers(30, 2000))
            builder.obs("ast", rng.uniform(10.0, 35.0), minute)
            builder.obs("alt", rng.uniform(10.0, 35.0), minute)
    else:
        raise ValueError(f"not a threshold complication: {complication}")


def _inject_sbi(builder, rng, occurred: bool, onset: int | None) -> None:
    if occurred:
        site = str(rng.choice(("blood", "urine", "throat", "sputum")))
        builder.culture(site, True, onset, onset + int(rng.integers(240, 1380)))
    elif rng.random() < 0.2:
        sample = int(rng.integers(30, 3000))
        builder.culture("blood", False, sample, sample + int(rng.integers(240, 1380)))
    elif rng.random() < 0.02:
        # positive culture too slow to count as onset
        sample = int(rng.integers(30, 3000))
        builder.culture("urine", True, sample, sample + int(rng.integers(1500, 2500)))


def _inject_aki(builder, rng, occurred: bool, onset: int | None) -> None:
    base = rng.uniform(0.7, 1.1)
    builder.obs("serum_creatinine", base, int(rng.integers(60, 240)))
    builder.obs(
        "serum_creatinine",
        base + rng.uniform(-0.04, 0.04),
        int(rng.integers(600, 1200)),
    )
    if occurred:
        rise = max(base + rng.uniform(0.4, 1.2), base * rng.uniform(1.6, 2.2))
        builder.obs("serum_creatinine", rise, onset)


def _inject_ards(builder, rng, occurred: bool, onset: int | None) -> None:
    if occurred:
        report_minute = int(rng.integers(max(60, onset - 2000), onset + 1))
        # onset is max(report, gas); force the later of the two at `onset`
        gas_minute = onset if rng.random() < 0.5 else int(rng.integers(max(60, onset - 2000), onset + 1))
        if gas_minute != onset and report_minute != onset:
            report_minute = onset
        fio2 = rng.uniform(0.4, 0.8)
        builder.obs("fio2", fio2, max(gas_minute - 10, 0))
        builder.obs("pao2", fio2 * rng.uniform(120.0, 280.0), gas_minute)
        builder.report(str(rng.choice(POSITIVE_REPORT_TEMPLATES)), report_minute)
    else:
        if rng.random() < 0.3:
            builder.report(str(rng.choice(NEGATIVE_REPORT_TEMPLATES)), int(rng.integers(60, 3000)))
        if rng.random() < 0.3:
            builder.obs("pao2", rng.uniform(85.0, 105.0), int(rng.integers(60, 3000)))


@dataclass
class IntendedEvent:
    occurred: bool
    onset: int | None


def generate_cohort(spec: SyntheticSpec) -> tuple[list[dict], list[dict[Complication, IntendedEvent]]]:
    """Wire records plus the generator's per-complication intent.

    The intent records what was injected, not what the labeler will say:
    an injected lung-injury event on an encounter with prior cardiac edema
    is intentionally ruled out downstream.
    """
    profiles = [_draw_profile(spec, i) for i in range(spec.n_encounters)]
    lps = np.asarray([p.linear_predictor for p in profiles])
    intercept = _solve_intercept(lps, spec.planted_prevalence)

    records: list[dict] = []
    intents: list[dict[Complication, IntendedEvent]] = []
    width = len(str(spec.n_encounters))
    for i, profile in enumerate(profiles):
        builder = _RecordBuilder(profile, f"enc{i:0{width}d}")
        _emit_baseline_series(builder, _stream_rng(spec, "series", i))

        event_rng = _stream_rng(spec, "events", i)
        intent: dict[Complication, IntendedEvent] = {}
        for complication in Complication:
            if complication == spec.planted:
                p_event = 1.0 / (1.0 + math.exp(-(intercept + profile.linear_predictor)))
                within = spec.within_24h_fraction
            elif complication == spec.null:
                p_event = spec.null_rate
                within = 0.1
            else:
                p_event = BACKGROUND_RATES[complication]
                within = BACKGROUND_WITHIN_24H[complication]
            occurred = bool(event_rng.random() < p_event)
            onset = _event_onset(event_rng, within) if occurred else None

            if complication in (
                Complication.ELEVATED_TROPONIN,
                Complication.ELEVATED_DDIMER,
                Complication.ELEVATED_IL6,
                Complication.ELEVATED_AMINOTRANSFERASES,
            ):
                _inject_threshold_event(builder, event_rng, complication, occurred, onset)
            elif complication is Complication.SBI:
                _inject_sbi(builder, event_rng, occurred, onset)
            elif complication is Complication.AKI:
                _inject_aki(builder, event_rng, occurred, onset)
            else:
                _inject_ards(builder, event_rng, occurred, onset)
            intent[complication] = IntendedEvent(occurred=occurred, onset=onset)

        records.append(builder.record())
        intents.append(intent)
    return records, intents


def write_jsonl(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def synthesize_to_path(spec: SyntheticSpec, path) -> int:
    records, _ = generate_cohort(spec)
    write_jsonl(records, path)
    return len(records)
