"""Training protocol: task building, cross-validated random search,
top-2 ensembling, isotonic calibration and family selection.

Per complication the task keeps encounters whose complication either
never occurred or first occurred after the first 24 hours; onsets inside
24 hours are excluded (they are knowable at prediction time), and the
kidney-injury task additionally excludes chronic kidney disease. Rows are
split into stratified folds; each family draws hyperparameter sets
uniformly at random from its search space and scores them by mean
validation AUROC over the folds. The two best sets keep their three fold
models each, giving a 6-member ensemble whose members are isotonically
calibrated on their own held-out fold (logistic members are exempt: their
scores are already probabilities from a properly scored fit). The family
with the best mean validation AUROC wins; ties fall back to the fixed
family order. The ensemble prediction is the arithmetic mean of the six
calibrated member outputs.

Every random draw is seeded by hashing (master seed, task labels), so a
rerun is bit-identical and independent of execution order.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cohort import Encounter
from .features import (
    N_FEATURES,
    Preprocessor,
    PreprocessorKind,
    feature_matrix,
    fit_preprocessor,
)
from .labeler import COMPLICATION_ORDER, Complication, ComplicationLabel
from .learners import (
    FAMILY_ORDER,
    PREPROCESSOR_FOR_FAMILY,
    GbmParams,
    KnnParams,
    LogisticParams,
    MlpParams,
)
from .learners.base import (
    hyperparams_from_dict,
    hyperparams_to_dict,
    model_from_dict,
    model_to_dict,
    train_model,
)
from .metrics import auprc, auroc

log = logging.getLogger(__name__)

DEFAULT_FOLDS = 3
DEFAULT_SEARCH_ITERATIONS = 20
TOP_CANDIDATES = 2

EXCLUDE_WITHIN_24H = "onset_within_24h"
EXCLUDE_PREEXISTING_CKD = "preexisting_ckd"


def derive_seed(master_seed: int, *labels) -> int:
    """Stable 64-bit seed from the master seed and a label path."""
    payload = repr((int(master_seed),) + tuple(str(l) for l in labels)).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


# -- task construction --------------------------------------------------------


@dataclass
class TaskDataset:
    """Feature rows and outcomes for one complication's prediction task."""

    complication: Complication
    encounter_ids: list[str]
    values: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    excluded: dict[str, list[str]]

    @property
    def n_rows(self) -> int:
        return len(self.encounter_ids)


def task_outcome(label: ComplicationLabel) -> int:
    """1 when the complication first occurred after the 24-hour mark."""
    return int(label.occurred and not label.within_24h)


def build_task_dataset(
    complication: Complication,
    encounters: Sequence[Encounter],
    labels_by_id: Mapping[str, Mapping[Complication, ComplicationLabel]],
    values: np.ndarray,
    mask: np.ndarray,
    require_positives: bool = True,
) -> TaskDataset:
    """Select task rows from a row-aligned cohort feature matrix.

    Exclusion reasons are recorded per encounter id; chronic kidney
    disease is checked before the onset-within-24h rule, so an encounter
    hitting both is accounted under the former.
    """
    keep: list[int] = []
    ids: list[str] = []
    outcomes: list[int] = []
    excluded: dict[str, list[str]] = {EXCLUDE_PREEXISTING_CKD: [], EXCLUDE_WITHIN_24H: []}
    for i, enc in enumerate(encounters):
        label = labels_by_id[enc.encounter_id][complication]
        if complication is Complication.AKI and "chronic_kidney_disease" in enc.comorbidities:
            excluded[EXCLUDE_PREEXISTING_CKD].append(enc.encounter_id)
            continue
        if label.within_24h:
            excluded[EXCLUDE_WITHIN_24H].append(enc.encounter_id)
            continue
        keep.append(i)
        ids.append(enc.encounter_id)
        outcomes.append(task_outcome(label))

    y = np.asarray(outcomes, dtype=np.float64)
    if require_positives and (y.size == 0 or y.sum() == 0):
        raise ValueError(f"untrainable task: no positive rows for {complication.value}")
    idx = np.asarray(keep, dtype=np.int64)
    return TaskDataset(
        complication=complication,
        encounter_ids=ids,
        values=values[idx],
        mask=mask[idx],
        y=y,
        excluded=excluded,
    )


# -- folds ---------------------------------------------------------------------


def stratified_kfold(y: np.ndarray, k: int = DEFAULT_FOLDS, seed: int = 0) -> list[np.ndarray]:
    """Deterministic stratified folds; per-fold class counts within 1 of proportional."""
    arr = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    pos = np.flatnonzero(arr == 1)
    neg = np.flatnonzero(arr == 0)
    if pos.size < k:
        raise ValueError(f"fewer positives ({pos.size}) than folds ({k})")
    if neg.size < k:
        raise ValueError(f"fewer negatives ({neg.size}) than folds ({k})")
    rng = np.random.default_rng(seed)
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    folds = []
    for pos_chunk, neg_chunk in zip(np.array_split(pos, k), np.array_split(neg, k)):
        folds.append(np.sort(np.concatenate([pos_chunk, neg_chunk])))
    return folds


# -- hyperparameter search -----------------------------------------------------

LR_C_GRID = (0.01, 0.1, 1.0, 10.0, 25.0, 50.0, 100.0)
LR_MAX_ITER_GRID = (50, 100, 200)
KNN_LEAF_SIZE_RANGE = (1, 50)
KNN_POWER_GRID = (1, 2)
KNN_NEIGHBORS_RANGE = (1, 30)
MLP_ALPHA_GRID = (0.005, 0.002, 0.01, 0.2, 0.03, 0.05)
MLP_ACTIVATION_GRID = ("tanh", "relu")
MLP_LEARNING_RATE_GRID = ("constant", "adaptive")
MLP_SOLVER_GRID = ("sgd", "adam")
MLP_HIDDEN_GRID = ((50, 50, 50), (50, 100, 50), (100,))
GBM_NUM_LEAVES_RANGE = (10, 40)
GBM_LEARNING_RATE_GRID = (0.005, 0.002, 0.01, 0.2, 0.03, 0.1)
GBM_MAX_DEPTH_RANGE = (1, 10)
GBM_N_ESTIMATORS_RANGE = (200, 500)


def _pick(rng: np.random.Generator, options: Sequence):
    return options[int(rng.integers(0, len(options)))]


def _pick_int(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def sample_hyperparameters(family: str, seed: int, n: int = DEFAULT_SEARCH_ITERATIONS) -> list:
    """n independent uniform draws (with replacement) from the family's space."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n):
        if family == "lr":
            draws.append(
                LogisticParams(c=_pick(rng, LR_C_GRID), max_iter=_pick(rng, LR_MAX_ITER_GRID))
            )
        elif family == "knn":
            draws.append(
                KnnParams(
                    n_neighbors=_pick_int(rng, KNN_NEIGHBORS_RANGE),
                    power=_pick(rng, KNN_POWER_GRID),
                    leaf_size=_pick_int(rng, KNN_LEAF_SIZE_RANGE),
                )
            )
        elif family == "gbm":
            draws.append(
                GbmParams(
                    num_leaves=_pick_int(rng, GBM_NUM_LEAVES_RANGE),
                    learning_rate=_pick(rng, GBM_LEARNING_RATE_GRID),
                    max_depth=_pick_int(rng, GBM_MAX_DEPTH_RANGE),
                    n_estimators=_pick_int(rng, GBM_N_ESTIMATORS_RANGE),
                )
            )
        elif family == "mlp":
            draws.append(
                MlpParams(
                    hidden_sizes=_pick(rng, MLP_HIDDEN_GRID),
                    activation=_pick(rng, MLP_ACTIVATION_GRID),
                    alpha=_pick(rng, MLP_ALPHA_GRID),
                    solver=_pick(rng, MLP_SOLVER_GRID),
                    learning_rate=_pick(rng, MLP_LEARNING_RATE_GRID),
                )
            )
        else:
            raise ValueError(f"unknown model family '{family}'")
    return draws


# -- cross-validation ----------------------------------------------------------


@dataclass
class FoldModel:
    fold: int
    model: object
    val_indices: np.ndarray
    val_scores: np.ndarray
    val_auroc: float
    val_auprc: float


@dataclass
class Candidate:
    family: str
    sampling_index: int
    hp: object
    fold_models: list[FoldModel]
    mean_auroc: float
    mean_auprc: float


def fit_fold_preprocessors(
    values: np.ndarray, mask: np.ndarray, folds: Sequence[np.ndarray], kind: PreprocessorKind
) -> list[Preprocessor]:
    """One preprocessor per fold, fit on that fold's training rows only."""
    n = values.shape[0]
    out = []
    for fold_idx in folds:
        train_rows = np.setdiff1d(np.arange(n), fold_idx)
        out.append(fit_preprocessor(kind, values[train_rows], mask[train_rows]))
    return out


def cross_validate_candidate(
    family: str,
    hp,
    sampling_index: int,
    task: TaskDataset,
    folds: Sequence[np.ndarray],
    preprocessors: Sequence[Preprocessor],
    master_seed: int,
) -> Candidate | None:
    """Train one hyperparameter draw across folds; None when training fails."""
    n = task.values.shape[0]
    fold_models: list[FoldModel] = []
    for f, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), val_idx)
        pre = preprocessors[f]
        x_train = pre.apply(task.values[train_idx], task.mask[train_idx])
        x_val = pre.apply(task.values[val_idx], task.mask[val_idx])
        seed = derive_seed(master_seed, task.complication.value, family, sampling_index, f)
        try:
            model = train_model(family, x_train, task.y[train_idx], hp, seed)
            scores = np.atleast_1d(model.predict(x_val))
            fold_models.append(
                FoldModel(
                    fold=f,
                    model=model,
                    val_indices=val_idx,
                    val_scores=scores,
                    val_auroc=auroc(task.y[val_idx], scores),
                    val_auprc=auprc(task.y[val_idx], scores),
                )
            )
        except Exception as exc:  # candidate is discarded, run continues
            log.warning(
                "%s/%s candidate %d fold %d failed: %s",
                task.complication.value, family, sampling_index, f, exc,
            )
            return None
    return Candidate(
        family=family,
        sampling_index=sampling_index,
        hp=hp,
        fold_models=fold_models,
        mean_auroc=float(np.mean([fm.val_auroc for fm in fold_models])),
        mean_auprc=float(np.mean([fm.val_auprc for fm in fold_models])),
    )


# -- isotonic calibration --------------------------------------------------------


@dataclass
class IsotonicCurve:
    """Non-decreasing least-squares fit, evaluated by linear interpolation
    between knots and clamped to the fitted range outside them."""

    x: np.ndarray
    y: np.ndarray

    def predict(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        single = s.ndim == 0
        out = np.interp(np.atleast_1d(s), self.x, self.y)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "IsotonicCurve":
        return cls(
            x=np.asarray(data["x"], dtype=np.float64),
            y=np.asarray(data["y"], dtype=np.float64),
        )


def fit_isotonic(scores, targets) -> IsotonicCurve:
    """Pool-adjacent-violators on score-sorted pairs.

    Tied scores are pooled before the monotone pass, so the fit is the
    exact weighted least-squares monotone projection.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if s.shape != t.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("scores and targets must be equal-length non-empty vectors")

    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    t_sorted = t[order]

    # blocks of (score, target sum, count), ties pre-pooled
    xs: list[float] = []
    sums: list[float] = []
    counts: list[int] = []
    i = 0
    while i < s_sorted.size:
        j = i
        while j + 1 < s_sorted.size and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        xs.append(float(s_sorted[i]))
        sums.append(float(t_sorted[i : j + 1].sum()))
        counts.append(j + 1 - i)
        i = j + 1

    # PAVA stack: merge while a block's mean falls below its predecessor's
    stack: list[list] = []  # [first_x_index, last_x_index, sum, count]
    for b in range(len(xs)):
        stack.append([b, b, sums[b], counts[b]])
        while len(stack) > 1 and (
            stack[-2][2] / stack[-2][3] > stack[-1][2] / stack[-1][3]
        ):
            last = stack.pop()
            stack[-1][1] = last[1]
            stack[-1][2] += last[2]
            stack[-1][3] += last[3]

    knot_x = np.asarray(xs, dtype=np.float64)
    knot_y = np.empty(len(xs), dtype=np.float64)
    for first, last, total, count in stack:
        knot_y[first : last + 1] = total / count
    return IsotonicCurve(x=knot_x, y=knot_y)


# -- ensembling ------------------------------------------------------------------


@dataclass
class EnsembleMember:
    hp_rank: int
    sampling_index: int
    fold: int
    hp: object
    model: object
    calibration: IsotonicCurve | None


@dataclass
class ComplicationEnsemble:
    complication: Complication
    family: str
    members: list[EnsembleMember]
    fold_preprocessors: list[Preprocessor]
    background_means: list[np.ndarray]
    mean_val_auroc: float
    mean_val_auprc: float

    def predict_risk(self, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Arithmetic mean of the calibrated member outputs, in [0, 1]."""
        single = values.ndim == 1
        vals = np.atleast_2d(values)
        msk = np.atleast_2d(mask)
        total = np.zeros(vals.shape[0], dtype=np.float64)
        for member in self.members:
            pre = self.fold_preprocessors[member.fold]
            raw = np.atleast_1d(member.model.predict(pre.apply(vals, msk)))
            if member.calibration is not None:
                raw = np.atleast_1d(member.calibration.predict(raw))
            total += raw
        risk = total / len(self.members)
        return float(risk[0]) if single else risk


def assemble_top_candidates(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Two best candidates by mean validation AUROC, ties to the lower
    sampling index (earlier draw)."""
    viable = [c for c in candidates if c is not None]
    if len(viable) < TOP_CANDIDATES:
        raise ValueError("insufficient candidates")
    ranked = sorted(viable, key=lambda c: (-c.mean_auroc, c.sampling_index))
    return ranked[:TOP_CANDIDATES]


def _column_means(x: np.ndarray) -> np.ndarray:
    """Column means over finite entries; all-missing columns fall back to 0."""
    finite = np.isfinite(x)
    counts = finite.sum(axis=0)
    sums = np.where(finite, x, 0.0).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def build_ensemble(
    complication: Complication,
    family: str,
    top: Sequence[Candidate],
    task: TaskDataset,
    folds: Sequence[np.ndarray],
    preprocessors: Sequence[Preprocessor],
    calibrate: bool = True,
) -> ComplicationEnsemble:
    """Members from the top candidates' fold models, calibrated per fold.

    Logistic members skip isotonic calibration; their sigmoid outputs are
    used as-is.
    """
    members: list[EnsembleMember] = []
    for rank, candidate in enumerate(top, start=1):
        for fm in candidate.fold_models:
            calibration = None
            if calibrate and family != "lr":
                calibration = fit_isotonic(fm.val_scores, task.y[fm.val_indices])
            members.append(
                EnsembleMember(
                    hp_rank=rank,
                    sampling_index=candidate.sampling_index,
                    fold=fm.fold,
                    hp=candidate.hp,
                    model=fm.model,
                    calibration=calibration,
                )
            )

    n = task.values.shape[0]
    background: list[np.ndarray] = []
    for f, pre in enumerate(preprocessors):
        train_rows = np.setdiff1d(np.arange(n), folds[f])
        transformed = pre.apply(task.values[train_rows], task.mask[train_rows])
        background.append(_column_means(transformed))

    return ComplicationEnsemble(
        complication=complication,
        family=family,
        members=members,
        fold_preprocessors=list(preprocessors),
        background_means=background,
        mean_val_auroc=float(np.mean([c.mean_auroc for c in top])),
        mean_val_auprc=float(np.mean([c.mean_auprc for c in top])),
    )


@dataclass
class FamilyValidation:
    family: str
    mean_auroc: float
    mean_auprc: float


@dataclass
class TaskTrainingResult:
    ensemble: ComplicationEnsemble
    family_table: list[FamilyValidation]
    excluded: dict[str, list[str]]


def train_task(
    task: TaskDataset,
    families: Sequence[str],
    master_seed: int,
    k: int = DEFAULT_FOLDS,
    n_search: int = DEFAULT_SEARCH_ITERATIONS,
) -> TaskTrainingResult:
    """Full protocol for one complication; returns the winning ensemble."""
    if not families:
        raise ValueError("at least one model family is required")
    if n_search < TOP_CANDIDATES:
        raise ValueError(f"n_search must be >= {TOP_CANDIDATES}")
    folds = stratified_kfold(
        task.y, k, seed=derive_seed(master_seed, task.complication.value, "folds")
    )

    pre_cache: dict[PreprocessorKind, list[Preprocessor]] = {}
    family_ensembles: dict[str, ComplicationEnsemble] = {}
    table: list[FamilyValidation] = []
    for family in families:
        kind = PreprocessorKind(PREPROCESSOR_FOR_FAMILY[family])
        if kind not in pre_cache:
            pre_cache[kind] = fit_fold_preprocessors(task.values, task.mask, folds, kind)
        preprocessors = pre_cache[kind]
        draws = sample_hyperparameters(
            family, seed=derive_seed(master_seed, task.complication.value, family, "search"), n=n_search
        )
        candidates = [
            cross_validate_candidate(family, hp, i, task, folds, preprocessors, master_seed)
            for i, hp in enumerate(draws)
        ]
        try:
            top = assemble_top_candidates(candidates)
        except ValueError:
            log.warning(
                "%s/%s: insufficient viable candidates, family skipped",
                task.complication.value, family,
            )
            continue
        ensemble = build_ensemble(task.complication, family, top, task, folds, preprocessors)
        family_ensembles[family] = ensemble
        table.append(
            FamilyValidation(
                family=family,
                mean_auroc=ensemble.mean_val_auroc,
                mean_auprc=ensemble.mean_val_auprc,
            )
        )

    if not family_ensembles:
        raise ValueError(f"no viable model family for {task.complication.value}")
    best_family = max(
        family_ensembles,
        key=lambda fam: (family_ensembles[fam].mean_val_auroc, -FAMILY_ORDER.index(fam)),
    )
    return TaskTrainingResult(
        ensemble=family_ensembles[best_family],
        family_table=table,
        excluded=task.excluded,
    )


def train_all_complications(
    encounters: Sequence[Encounter],
    labels_by_id: Mapping[str, Mapping[Complication, ComplicationLabel]],
    complications: Sequence[Complication],
    families: Sequence[str],
    master_seed: int,
    k: int = DEFAULT_FOLDS,
    n_search: int = DEFAULT_SEARCH_ITERATIONS,
) -> dict[Complication, TaskTrainingResult]:
    """Train every requested complication on one cohort."""
    values, mask = feature_matrix(encounters, labels_by_id)
    results: dict[Complication, TaskTrainingResult] = {}
    for complication in complications:
        task = build_task_dataset(complication, encounters, labels_by_id, values, mask)
        results[complication] = train_task(task, families, master_seed, k, n_search)
    return results


# -- serialization ----------------------------------------------------------------

ENSEMBLE_SCHEMA_VERSION = 1


def ensemble_to_dict(ensemble: ComplicationEnsemble) -> dict:
    return {
        "schema_version": ENSEMBLE_SCHEMA_VERSION,
        "complication": ensemble.complication.value,
        "family": ensemble.family,
        "mean_val_auroc": ensemble.mean_val_auroc,
        "mean_val_auprc": ensemble.mean_val_auprc,
        "fold_preprocessors": [p.to_dict() for p in ensemble.fold_preprocessors],
        "background_means": [b.tolist() for b in ensemble.background_means],
        "members": [
            {
                "hp_rank": m.hp_rank,
                "sampling_index": m.sampling_index,
                "fold": m.fold,
                "hp": hyperparams_to_dict(m.hp),
                "model": model_to_dict(m.model),
                "calibration": m.calibration.to_dict() if m.calibration else None,
            }
            for m in ensemble.members
        ],
    }


def ensemble_from_dict(data: dict) -> ComplicationEnsemble:
    version = data.get("schema_version")
    if version != ENSEMBLE_SCHEMA_VERSION:
        raise ValueError(f"unsupported ensemble schema version {version!r}")
    family = data["family"]
    members = [
        EnsembleMember(
            hp_rank=int(m["hp_rank"]),
            sampling_index=int(m["sampling_index"]),
            fold=int(m["fold"]),
            hp=hyperparams_from_dict(family, m["hp"]),
            model=model_from_dict(m["model"]),
            calibration=IsotonicCurve.from_dict(m["calibration"]) if m["calibration"] else None,
        )
        for m in data["members"]
    ]
    return ComplicationEnsemble(
        complication=Complication(data["complication"]),
        family=family,
        members=members,
        fold_preprocessors=[Preprocessor.from_dict(p) for p in data["fold_preprocessors"]],
        background_means=[np.asarray(b, dtype=np.float64) for b in data["background_means"]],
        mean_val_auroc=float(data["mean_val_auroc"]),
        mean_val_auprc=float(data["mean_val_auprc"]),
    )


# -- cohort-level prediction -------------------------------------------------------


def predict_cohort(
    ensembles: Mapping[Complication, ComplicationEnsemble],
    encounters: Sequence[Encounter],
    labels_by_id: Mapping[str, Mapping[Complication, ComplicationLabel]],
) -> dict[Complication, np.ndarray]:
    """Risk per encounter and complication; NaN when the complication
    already occurred within the first 24 hours (the model has nothing to
    predict there, mirroring the training exclusion)."""
    values, mask = feature_matrix(encounters, labels_by_id)
    out: dict[Complication, np.ndarray] = {}
    for complication, ensemble in ensembles.items():
        risks = ensemble.predict_risk(values, mask)
        risks = np.atleast_1d(np.asarray(risks, dtype=np.float64))
        for i, enc in enumerate(encounters):
            if labels_by_id[enc.encounter_id][complication].within_24h:
                risks[i] = np.nan
        out[complication] = risks
    return out
