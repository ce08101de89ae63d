"""First-24-hour feature extraction and per-family preprocessing.

The feature vector has 97 fixed slots:

    2   age, bmi
    10  sex plus 4 comorbidities plus 5 symptoms (binary)
    21  min/max/mean for 7 vital signs
    57  min/max/mean for 19 laboratory analytes
    7   complication-within-24h flags

Aggregates use observations with time at or before minute 1440.
Missingness is explicit: a masked slot carries NaN in the value array and
True in the mask, never a fabricated number. Analytes used for outcome
labeling are banned from the schema; the ban is asserted at import time
and can be re-checked at startup via `assert_no_label_leakage`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cohort import (
    COMORBIDITY_NAMES,
    LAB_CODES,
    LABEL_ANALYTE_CODES,
    SYMPTOM_NAMES,
    VITAL_CODES,
    Encounter,
)
from .labeler import COMPLICATION_ORDER, DAY_MINUTES, Complication, ComplicationLabel

log = logging.getLogger(__name__)

SUMMARY_STATS = ("min", "max", "mean")

FEATURE_ANALYTES: tuple[str, ...] = VITAL_CODES + LAB_CODES


class LeakageError(RuntimeError):
    """An outcome-labeling analyte appeared in the feature schema."""


def assert_no_label_leakage(analytes: Sequence[str] = FEATURE_ANALYTES) -> None:
    leaked = sorted(set(analytes) & set(LABEL_ANALYTE_CODES))
    if leaked:
        raise LeakageError(
            f"label-defining analytes cannot be features: {', '.join(leaked)}"
        )


def _build_slot_names() -> tuple[str, ...]:
    names: list[str] = ["age", "bmi", "sex_male"]
    names += [f"comorbidity_{c}" for c in COMORBIDITY_NAMES]
    names += [f"symptom_{s}" for s in SYMPTOM_NAMES]
    for code in FEATURE_ANALYTES:
        names += [f"{code}_{stat}" for stat in SUMMARY_STATS]
    names += [f"within24h_{kind.value}" for kind in COMPLICATION_ORDER]
    return tuple(names)


FEATURE_NAMES: tuple[str, ...] = _build_slot_names()
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX: dict[str, int] = {name: i for i, name in enumerate(FEATURE_NAMES)}

BINARY_SLOTS: tuple[str, ...] = (
    ("sex_male",)
    + tuple(f"comorbidity_{c}" for c in COMORBIDITY_NAMES)
    + tuple(f"symptom_{s}" for s in SYMPTOM_NAMES)
    + tuple(f"within24h_{kind.value}" for kind in COMPLICATION_ORDER)
)

assert N_FEATURES == 97, f"feature schema must have 97 slots, got {N_FEATURES}"
assert_no_label_leakage()


@dataclass
class FeatureVector:
    """Values with an explicit missingness mask; masked slots hold NaN."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,) or self.mask.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have {N_FEATURES} slots")


_WINDOW_CODES = frozenset(FEATURE_ANALYTES)


def extract_features(
    encounter: Encounter, labels: Mapping[Complication, ComplicationLabel]
) -> FeatureVector:
    """Build the 97-slot vector from the first 24 hours of one encounter."""
    values = np.full(N_FEATURES, np.nan, dtype=np.float64)
    mask = np.ones(N_FEATURES, dtype=bool)

    def put(name: str, value: float) -> None:
        idx = FEATURE_INDEX[name]
        values[idx] = value
        mask[idx] = False

    put("age", float(encounter.age))
    if encounter.bmi is not None:
        put("bmi", float(encounter.bmi))
    put("sex_male", 1.0 if encounter.sex == "male" else 0.0)
    for name in COMORBIDITY_NAMES:
        put(f"comorbidity_{name}", 1.0 if name in encounter.comorbidities else 0.0)
    for name in SYMPTOM_NAMES:
        put(f"symptom_{name}", 1.0 if name in encounter.symptoms else 0.0)

    window: dict[str, list[float]] = {}
    for obs in encounter.observations:
        if obs.time <= DAY_MINUTES and obs.code in _WINDOW_CODES:
            window.setdefault(obs.code, []).append(obs.value)
    for code in FEATURE_ANALYTES:
        observed = window.get(code)
        if observed:
            arr = np.asarray(observed, dtype=np.float64)
            put(f"{code}_min", float(arr.min()))
            put(f"{code}_max", float(arr.max()))
            put(f"{code}_mean", float(arr.mean()))

    for kind in COMPLICATION_ORDER:
        label = labels[kind]
        put(f"within24h_{kind.value}", 1.0 if label.within_24h else 0.0)

    return FeatureVector(values=values, mask=mask)


def feature_matrix(
    encounters: Sequence[Encounter],
    labels_by_id: Mapping[str, Mapping[Complication, ComplicationLabel]],
) -> tuple[np.ndarray, np.ndarray]:
    """Stack feature vectors for a list of encounters; rows keep input order."""
    n = len(encounters)
    values = np.full((n, N_FEATURES), np.nan, dtype=np.float64)
    mask = np.ones((n, N_FEATURES), dtype=bool)
    for i, enc in enumerate(encounters):
        fv = extract_features(enc, labels_by_id[enc.encounter_id])
        values[i] = fv.values
        mask[i] = fv.mask
    return values, mask


# -- preprocessing ------------------------------------------------------------


class PreprocessorKind(str, Enum):
    MEDIAN_IMPUTE_MINMAX = "median_impute_minmax"
    MEDIAN_IMPUTE_STANDARD = "median_impute_standard"
    PASSTHROUGH = "passthrough"


@dataclass
class Preprocessor:
    """Imputation plus scaling statistics learned from training rows only.

    Statistics are computed on the median-imputed training matrix, so the
    transform of the training data lands exactly in [0, 1] (min-max) or at
    mean 0 / unit variance (standard). Slots with zero spread map to 0.
    Passthrough keeps NaN as the missingness signal and learns nothing
    beyond the medians.
    """

    kind: PreprocessorKind
    medians: np.ndarray
    low: np.ndarray | None = None
    span: np.ndarray | None = None
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def apply(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Transform a (n, 97) matrix or a single 97-vector to model space."""
        single = values.ndim == 1
        vals = np.atleast_2d(np.asarray(values, dtype=np.float64))
        msk = np.atleast_2d(np.asarray(mask, dtype=bool))
        if vals.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} feature slots")

        if self.kind is PreprocessorKind.PASSTHROUGH:
            out = vals.copy()
            out[msk] = np.nan
        else:
            out = np.where(msk, self.medians[None, :], vals)
            if self.kind is PreprocessorKind.MEDIAN_IMPUTE_MINMAX:
                span = self.span
                out = np.where(span[None, :] > 0, (out - self.low[None, :]) / np.where(span > 0, span, 1.0), 0.0)
            else:
                std = self.std
                out = np.where(std[None, :] > 0, (out - self.mean[None, :]) / np.where(std > 0, std, 1.0), 0.0)
        return out[0] if single else out

    def to_dict(self) -> dict:
        data: dict = {"kind": self.kind.value, "medians": self.medians.tolist()}
        if self.low is not None:
            data["low"] = self.low.tolist()
            data["span"] = self.span.tolist()
        if self.mean is not None:
            data["mean"] = self.mean.tolist()
            data["std"] = self.std.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Preprocessor":
        def arr(key):
            return np.asarray(data[key], dtype=np.float64) if key in data else None

        return cls(
            kind=PreprocessorKind(data["kind"]),
            medians=np.asarray(data["medians"], dtype=np.float64),
            low=arr("low"),
            span=arr("span"),
            mean=arr("mean"),
            std=arr("std"),
        )


def fit_preprocessor(
    kind: PreprocessorKind, values: np.ndarray, mask: np.ndarray
) -> Preprocessor:
    """Learn imputation and scaling statistics from training rows.

    A slot masked in every training row gets median 0 (with a warning);
    no value is ever clipped to the training range at apply time.
    """
    vals = np.asarray(values, dtype=np.float64)
    msk = np.asarray(mask, dtype=bool)
    if vals.ndim != 2 or vals.shape[1] != N_FEATURES:
        raise ValueError(f"expected (n, {N_FEATURES}) training matrix")
    if vals.shape[0] == 0:
        raise ValueError("cannot fit a preprocessor on zero rows")

    medians = np.zeros(N_FEATURES, dtype=np.float64)
    for j in range(N_FEATURES):
        observed = vals[~msk[:, j], j]
        if observed.size:
            medians[j] = float(np.median(observed))
        else:
            log.warning(
                "slot '%s' is masked in every training row; median set to 0",
                FEATURE_NAMES[j],
            )

    pre = Preprocessor(kind=kind, medians=medians)
    if kind is PreprocessorKind.PASSTHROUGH:
        return pre

    imputed = np.where(msk, medians[None, :], vals)
    if kind is PreprocessorKind.MEDIAN_IMPUTE_MINMAX:
        pre.low = imputed.min(axis=0)
        pre.span = imputed.max(axis=0) - pre.low
    elif kind is PreprocessorKind.MEDIAN_IMPUTE_STANDARD:
        pre.mean = imputed.mean(axis=0)
        pre.std = imputed.std(axis=0)
    else:
        raise ValueError(f"unknown preprocessor kind {kind!r}")
    return pre
