"""Complication risk pipeline for hospitalized-patient encounter data.

The package covers the full path from raw encounter lines to calibrated
risks: wire parsing and cohort screens, complication labeling over labs,
cultures and imaging reports, first-day feature extraction, four model
families trained by cross-validated random search into calibrated
6-member ensembles, threshold-free evaluation, and exact per-feature
attributions for the tree and logistic families.
"""

from .cohort import (
    CohortSplit,
    CultureResult,
    Encounter,
    Observation,
    ParseError,
    ParseResult,
    RadiologyReport,
    apply_cohort_exclusions,
    parse_encounter_lines,
    parse_encounters,
    parse_encounters_path,
    split_train_test,
)
from .config import RunConfig
from .features import (
    FEATURE_NAMES,
    N_FEATURES,
    FeatureVector,
    LeakageError,
    Preprocessor,
    PreprocessorKind,
    assert_no_label_leakage,
    extract_features,
    feature_matrix,
    fit_preprocessor,
)
from .labeler import (
    COMPLICATION_ORDER,
    Complication,
    ComplicationLabel,
    compute_pf_series,
    label_cohort,
    label_encounter,
)
from .metrics import (
    MetricResult,
    ReliabilityBin,
    auprc,
    auroc,
    bootstrap_ci,
    calibration_intercept,
    calibration_slope,
    pr_points,
    reliability_curve,
    roc_points,
)
from .explain import (
    Attribution,
    linear_attribution,
    rank_features,
    tree_attribution,
)
from .pipeline import (
    ComplicationEnsemble,
    IsotonicCurve,
    TaskDataset,
    build_task_dataset,
    derive_seed,
    ensemble_from_dict,
    ensemble_to_dict,
    fit_isotonic,
    predict_cohort,
    sample_hyperparameters,
    stratified_kfold,
    train_all_complications,
    train_task,
)
from .reportnlp import ImagingFinding, Lexicon, scan_report, scan_reports, scan_text
from .synth import SyntheticSpec, generate_cohort, synthesize_to_path

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "COMPLICATION_ORDER",
    "CohortSplit",
    "Complication",
    "ComplicationEnsemble",
    "ComplicationLabel",
    "CultureResult",
    "Encounter",
    "FEATURE_NAMES",
    "FeatureVector",
    "ImagingFinding",
    "IsotonicCurve",
    "LeakageError",
    "Lexicon",
    "MetricResult",
    "N_FEATURES",
    "Observation",
    "ParseError",
    "ParseResult",
    "Preprocessor",
    "PreprocessorKind",
    "RadiologyReport",
    "ReliabilityBin",
    "RunConfig",
    "SyntheticSpec",
    "TaskDataset",
    "apply_cohort_exclusions",
    "assert_no_label_leakage",
    "auprc",
    "auroc",
    "bootstrap_ci",
    "build_task_dataset",
    "calibration_intercept",
    "calibration_slope",
    "compute_pf_series",
    "derive_seed",
    "ensemble_from_dict",
    "ensemble_to_dict",
    "extract_features",
    "feature_matrix",
    "fit_isotonic",
    "fit_preprocessor",
    "generate_cohort",
    "label_cohort",
    "label_encounter",
    "linear_attribution",
    "parse_encounter_lines",
    "parse_encounters",
    "parse_encounters_path",
    "pr_points",
    "predict_cohort",
    "rank_features",
    "reliability_curve",
    "roc_points",
    "sample_hyperparameters",
    "scan_report",
    "scan_reports",
    "scan_text",
    "split_train_test",
    "stratified_kfold",
    "synthesize_to_path",
    "train_all_complications",
    "train_task",
    "tree_attribution",
]
