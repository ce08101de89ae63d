"""Feature schema, extraction window, and preprocessor behavior."""

import logging

import numpy as np
import pytest

from comprisk.features import (
    BINARY_SLOTS,
    FEATURE_INDEX,
    FEATURE_NAMES,
    N_FEATURES,
    LeakageError,
    Preprocessor,
    PreprocessorKind,
    assert_no_label_leakage,
    extract_features,
    feature_matrix,
    fit_preprocessor,
)
from comprisk.labeler import label_encounter

from corpus_labeling import enc, o


def features_for(encounter):
    return extract_features(encounter, label_encounter(encounter))


def test_schema_has_97_slots_in_fixed_composition():
    assert N_FEATURES == 97
    assert len(FEATURE_NAMES) == len(set(FEATURE_NAMES)) == 97
    assert FEATURE_NAMES[:3] == ("age", "bmi", "sex_male")
    stats = [n for n in FEATURE_NAMES if n.endswith(("_min", "_max", "_mean"))]
    flags = [n for n in FEATURE_NAMES if n.startswith("within24h_")]
    assert len(stats) == 3 * 26 and len(flags) == 7
    assert len(BINARY_SLOTS) == 1 + 4 + 5 + 7


def test_leakage_guard_rejects_label_analytes():
    assert_no_label_leakage()
    with pytest.raises(LeakageError, match="troponin_t"):
        assert_no_label_leakage(("crp", "troponin_t"))


def test_window_keeps_day_one_and_preadmission_draws():
    encounter = enc("w", [
        o("crp", 10.0, -100), o("crp", 30.0, 1440), o("crp", 999.0, 1441),
    ])
    fv = features_for(encounter)
    assert fv.values[FEATURE_INDEX["crp_min"]] == 10.0
    assert fv.values[FEATURE_INDEX["crp_max"]] == 30.0
    assert fv.values[FEATURE_INDEX["crp_mean"]] == 20.0
    assert not fv.mask[FEATURE_INDEX["crp_mean"]]


def test_unobserved_slots_are_masked_nan():
    fv = features_for(enc("m", bmi=None))
    j = FEATURE_INDEX["bmi"]
    assert fv.mask[j] and np.isnan(fv.values[j])
    j = FEATURE_INDEX["ldh_mean"]
    assert fv.mask[j] and np.isnan(fv.values[j])
    assert not fv.mask[FEATURE_INDEX["age"]]


def test_demographic_and_flag_slots():
    encounter = enc(
        "d",
        [o("troponin_t", 20.0, 100)],
        age=71,
        sex="male",
        bmi=31.2,
        comorbidities=("diabetes",),
        symptoms=("fever", "cough"),
    )
    fv = features_for(encounter)
    get = lambda name: fv.values[FEATURE_INDEX[name]]
    assert get("age") == 71.0 and get("bmi") == 31.2 and get("sex_male") == 1.0
    assert get("comorbidity_diabetes") == 1.0
    assert get("comorbidity_hypertension") == 0.0
    assert get("symptom_fever") == 1.0 and get("symptom_rash") == 0.0
    assert get("within24h_elevated_troponin") == 1.0
    assert get("within24h_ards") == 0.0


def test_label_analytes_never_fill_feature_slots():
    fv = features_for(enc("x", [o("troponin_t", 900.0, 10), o("d_dimer", 9e5, 10)]))
    # no measurement slot exists for label analytes; only the outcome flags react
    assert all("troponin" not in n and "dimer" not in n
               for n in FEATURE_NAMES if not n.startswith("within24h_"))
    observed = [FEATURE_NAMES[j] for j in range(N_FEATURES) if not fv.mask[j]]
    assert all(n in ("age", "bmi") or n in BINARY_SLOTS for n in observed)
    assert fv.values[FEATURE_INDEX["within24h_elevated_troponin"]] == 1.0


def test_feature_matrix_keeps_row_order():
    encounters = [enc("r1", [o("crp", 5.0, 10)]), enc("r2", [o("crp", 7.0, 10)])]
    labels = {e.encounter_id: label_encounter(e) for e in encounters}
    values, mask = feature_matrix(encounters, labels)
    assert values.shape == mask.shape == (2, 97)
    j = FEATURE_INDEX["crp_mean"]
    assert values[0, j] == 5.0 and values[1, j] == 7.0


def _toy_matrix():
    values = np.full((4, N_FEATURES), np.nan)
    mask = np.ones((4, N_FEATURES), dtype=bool)
    j = FEATURE_INDEX["age"]
    values[:, j] = [20.0, 40.0, 60.0, 80.0]
    mask[:, j] = False
    k = FEATURE_INDEX["bmi"]
    values[:2, k] = [25.0, 35.0]
    mask[:2, k] = False
    return values, mask, j, k


def test_minmax_preprocessor_scales_training_rows_into_unit_interval():
    values, mask, j, k = _toy_matrix()
    pre = fit_preprocessor(PreprocessorKind.MEDIAN_IMPUTE_MINMAX, values, mask)
    out = pre.apply(values, mask)
    np.testing.assert_allclose(out[:, j], [0.0, 1 / 3, 2 / 3, 1.0])
    # masked bmi rows take the training median 30, the midpoint of its span
    np.testing.assert_allclose(out[:, k], [0.0, 1.0, 0.5, 0.5])
    assert not np.isnan(out).any()
    # constant slots (all-masked medians are 0 everywhere) collapse to 0
    assert (out[:, FEATURE_INDEX["ldh_mean"]] == 0.0).all()
    # new data beyond the training range is not clipped
    fresh = values[:1].copy()
    fresh[0, j] = 100.0
    np.testing.assert_allclose(pre.apply(fresh, mask[:1])[:, j], [4 / 3])


def test_standard_preprocessor_centers_training_rows():
    values, mask, j, _ = _toy_matrix()
    pre = fit_preprocessor(PreprocessorKind.MEDIAN_IMPUTE_STANDARD, values, mask)
    out = pre.apply(values, mask)
    assert abs(out[:, j].mean()) < 1e-12 and abs(out[:, j].std() - 1.0) < 1e-12
    assert not np.isnan(out).any()


def test_passthrough_preserves_nan_for_masked_slots():
    values, mask, j, k = _toy_matrix()
    pre = fit_preprocessor(PreprocessorKind.PASSTHROUGH, values, mask)
    out = pre.apply(values, mask)
    np.testing.assert_array_equal(out[:, j], values[:, j])
    assert np.isnan(out[2:, k]).all() and not np.isnan(out[:2, k]).any()


def test_single_vector_apply_matches_matrix_apply():
    values, mask, j, _ = _toy_matrix()
    pre = fit_preprocessor(PreprocessorKind.MEDIAN_IMPUTE_MINMAX, values, mask)
    row = pre.apply(values[1], mask[1])
    assert row.shape == (N_FEATURES,)
    np.testing.assert_array_equal(row, pre.apply(values, mask)[1])


def test_all_masked_slot_warns_and_defaults_median_to_zero(caplog):
    values, mask, _, _ = _toy_matrix()
    with caplog.at_level(logging.WARNING):
        pre = fit_preprocessor(PreprocessorKind.MEDIAN_IMPUTE_STANDARD, values, mask)
    assert "masked in every training row" in caplog.text
    assert pre.medians[FEATURE_INDEX["crp_mean"]] == 0.0


def test_preprocessor_round_trips_through_dict():
    values, mask, _, _ = _toy_matrix()
    for kind in PreprocessorKind:
        pre = fit_preprocessor(kind, values, mask)
        clone = Preprocessor.from_dict(pre.to_dict())
        np.testing.assert_array_equal(
            pre.apply(values, mask), clone.apply(values, mask)
        )


def test_fit_rejects_bad_shapes():
    with pytest.raises(ValueError):
        fit_preprocessor(
            PreprocessorKind.PASSTHROUGH, np.zeros((2, 5)), np.zeros((2, 5), bool)
        )
    with pytest.raises(ValueError):
        fit_preprocessor(
            PreprocessorKind.PASSTHROUGH,
            np.zeros((0, N_FEATURES)),
            np.zeros((0, N_FEATURES), bool),
        )
