"""Complication labeling from raw encounter timelines.

Seven in-hospital complications are detected from observations, culture
results and radiology reports. Each label carries the onset minute
(`first_time`, relative to admission) when the complication occurred.
A missing assay never raises: absence of evidence labels the complication
negative.

All numeric thresholds are inclusive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .cohort import Encounter, Observation
from .reportnlp import Lexicon, first_positive_finding

log = logging.getLogger(__name__)

DAY_MINUTES = 1440
AKI_WINDOW_MINUTES = 2880           # rolling 48 h window for the 0.3 mg/dl rise
ARDS_ONSET_LIMIT_MINUTES = 7 * DAY_MINUTES

TROPONIN_T_THRESHOLD_NG_L = 14.0
D_DIMER_THRESHOLD_NG_ML = 500.0
IL6_THRESHOLD_PG_ML = 8.43
AMINOTRANSFERASE_THRESHOLD_U_L = 40.0   # AST and ALT jointly
AKI_DELTA_MG_DL = 0.3
AKI_BASELINE_RATIO = 1.5
SBI_RESULT_WINDOW_MINUTES = 1440
PF_RATIO_THRESHOLD = 300.0
DEFAULT_FIO2_FRACTION = 0.2095          # room air when no FiO2 was charted


class Complication(Enum):
    """The seven complications, in fixed output order."""

    ELEVATED_TROPONIN = "elevated_troponin"
    ELEVATED_DDIMER = "elevated_ddimer"
    ELEVATED_AMINOTRANSFERASES = "elevated_aminotransferases"
    ELEVATED_IL6 = "elevated_il6"
    SBI = "sbi"
    AKI = "aki"
    ARDS = "ards"


COMPLICATION_ORDER: tuple[Complication, ...] = tuple(Complication)


@dataclass(frozen=True)
class ComplicationLabel:
    kind: Complication
    occurred: bool
    first_time: int | None = None

    def __post_init__(self):
        if self.occurred and self.first_time is None:
            raise ValueError("occurred label requires first_time")
        if not self.occurred and self.first_time is not None:
            raise ValueError("negative label cannot carry first_time")

    @property
    def within_24h(self) -> bool:
        return self.occurred and self.first_time is not None and self.first_time <= DAY_MINUTES


def _negative(kind: Complication) -> ComplicationLabel:
    return ComplicationLabel(kind=kind, occurred=False)


def _sorted_values(encounter: Encounter, code: str) -> list[Observation]:
    # Encounter observations are already time-sorted; the filter keeps order,
    # and records sharing a timestamp keep their recorded order.
    return [o for o in encounter.observations if o.code == code]


def _label_threshold(
    encounter: Encounter, kind: Complication, code: str, threshold: float
) -> ComplicationLabel:
    for obs in _sorted_values(encounter, code):
        if obs.value >= threshold:
            return ComplicationLabel(kind=kind, occurred=True, first_time=obs.time)
    return _negative(kind)


def label_elevated_troponin(encounter: Encounter) -> ComplicationLabel:
    return _label_threshold(
        encounter, Complication.ELEVATED_TROPONIN, "troponin_t", TROPONIN_T_THRESHOLD_NG_L
    )


def label_elevated_ddimer(encounter: Encounter) -> ComplicationLabel:
    return _label_threshold(
        encounter, Complication.ELEVATED_DDIMER, "d_dimer", D_DIMER_THRESHOLD_NG_ML
    )


def label_elevated_il6(encounter: Encounter) -> ComplicationLabel:
    return _label_threshold(
        encounter, Complication.ELEVATED_IL6, "il6", IL6_THRESHOLD_PG_ML
    )


def label_elevated_aminotransferases(encounter: Encounter) -> ComplicationLabel:
    """AST and ALT jointly at or above 40 U/L.

    Onset is the earliest minute t at which the latest AST value at or
    before t and the latest ALT value at or before t are both at or above
    threshold; the two draws need not be simultaneous.
    """
    kind = Complication.ELEVATED_AMINOTRANSFERASES
    ast = _sorted_values(encounter, "ast")
    alt = _sorted_values(encounter, "alt")
    if not ast or not alt:
        return _negative(kind)

    times = sorted({o.time for o in ast} | {o.time for o in alt})
    for t in times:
        last_ast = next((o.value for o in reversed(ast) if o.time <= t), None)
        last_alt = next((o.value for o in reversed(alt) if o.time <= t), None)
        if (
            last_ast is not None
            and last_alt is not None
            and last_ast >= AMINOTRANSFERASE_THRESHOLD_U_L
            and last_alt >= AMINOTRANSFERASE_THRESHOLD_U_L
        ):
            return ComplicationLabel(kind=kind, occurred=True, first_time=t)
    return _negative(kind)


def label_sbi(encounter: Encounter) -> ComplicationLabel:
    """Secondary bacterial infection: positive culture resulted within 24 h.

    Only cultures whose result arrived within 1440 minutes of sampling
    qualify; onset is the sample time of the earliest qualifying culture.
    """
    kind = Complication.SBI
    qualifying = [
        c
        for c in encounter.cultures
        if c.positive and (c.result_time - c.sample_time) <= SBI_RESULT_WINDOW_MINUTES
    ]
    if not qualifying:
        return _negative(kind)
    first = min(qualifying, key=lambda c: c.sample_time)
    return ComplicationLabel(kind=kind, occurred=True, first_time=first.sample_time)


def label_aki(encounter: Encounter) -> ComplicationLabel:
    """Acute kidney injury from serum creatinine dynamics.

    A creatinine observation qualifies when it rises at least 0.3 mg/dl
    above some earlier observation within the preceding 48 hours, or when
    it reaches at least 1.5 times the baseline (the first recorded value,
    no window). The urine-output criterion is not evaluated. Onset is the
    time of the earliest qualifying observation.
    """
    kind = Complication.AKI
    series = _sorted_values(encounter, "serum_creatinine")
    if len(series) < 2:
        return _negative(kind)
    baseline = series[0].value
    for i in range(1, len(series)):
        current = series[i]
        if current.value >= AKI_BASELINE_RATIO * baseline:
            return ComplicationLabel(kind=kind, occurred=True, first_time=current.time)
        for j in range(i):
            earlier = series[j]
            if (
                current.time - earlier.time <= AKI_WINDOW_MINUTES
                and current.value - earlier.value >= AKI_DELTA_MG_DL
            ):
                return ComplicationLabel(kind=kind, occurred=True, first_time=current.time)
    return _negative(kind)


@dataclass(frozen=True)
class PfPoint:
    """One PaO2/FiO2 ratio, anchored at the PaO2 draw time."""

    time: int
    pao2: float
    fio2: float
    ratio: float


def compute_pf_series(encounter: Encounter) -> list[PfPoint]:
    """Pair every PaO2 draw with the closest FiO2 at or before it.

    Without any prior FiO2 the room-air fraction 0.2095 is assumed. A
    charted FiO2 of zero cannot form a ratio; the PaO2 draw is skipped
    with a warning.
    """
    fio2_series = _sorted_values(encounter, "fio2")
    points: list[PfPoint] = []
    for obs in _sorted_values(encounter, "pao2"):
        fio2 = DEFAULT_FIO2_FRACTION
        for candidate in fio2_series:
            if candidate.time <= obs.time:
                fio2 = candidate.value
            else:
                break
        if fio2 == 0.0:
            log.warning(
                "encounter %s: FiO2 of 0 at or before minute %d, PaO2 draw skipped",
                encounter.encounter_id,
                obs.time,
            )
            continue
        points.append(PfPoint(time=obs.time, pao2=obs.value, fio2=fio2, ratio=obs.value / fio2))
    return points


def label_ards(encounter: Encounter, lexicon: Lexicon | None = None) -> ComplicationLabel:
    """ARDS: positive imaging plus PF ratio at or below 300 inside one week.

    Onset is the later of the first positive imaging finding and the first
    qualifying PF ratio; it must fall within 7 days of admission. A prior
    cardiac-edema flag rules the encounter out entirely.
    """
    kind = Complication.ARDS
    if encounter.cardiac_edema_prior:
        return _negative(kind)
    finding = first_positive_finding(encounter.reports, lexicon)
    if finding is None:
        return _negative(kind)
    qualifying = [p for p in compute_pf_series(encounter) if p.ratio <= PF_RATIO_THRESHOLD]
    if not qualifying:
        return _negative(kind)
    first_pf = min(qualifying, key=lambda p: p.time)
    onset = max(finding.time, first_pf.time)
    if onset > ARDS_ONSET_LIMIT_MINUTES:
        return _negative(kind)
    return ComplicationLabel(kind=kind, occurred=True, first_time=onset)


def label_encounter(
    encounter: Encounter, lexicon: Lexicon | None = None
) -> dict[Complication, ComplicationLabel]:
    """Label all seven complications for one encounter."""
    return {
        Complication.ELEVATED_TROPONIN: label_elevated_troponin(encounter),
        Complication.ELEVATED_DDIMER: label_elevated_ddimer(encounter),
        Complication.ELEVATED_AMINOTRANSFERASES: label_elevated_aminotransferases(encounter),
        Complication.ELEVATED_IL6: label_elevated_il6(encounter),
        Complication.SBI: label_sbi(encounter),
        Complication.AKI: label_aki(encounter),
        Complication.ARDS: label_ards(encounter, lexicon),
    }


def label_cohort(
    encounters: Iterable[Encounter], lexicon: Lexicon | None = None
) -> dict[str, dict[Complication, ComplicationLabel]]:
    return {enc.encounter_id: label_encounter(enc, lexicon) for enc in encounters}
