"""Shared learner contracts: hyperparameter types, registry, serialization.

Every trainer takes a dense float64 matrix (missing values as NaN, only
meaningful for the gradient-boosted family), a binary label vector and a
seed, and returns a model exposing `predict(X) -> risk in [0, 1]`.
Training with a single-class label vector raises ValueError("degenerate
labels") in every family.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Protocol

import numpy as np

FAMILY_ORDER: tuple[str, ...] = ("lr", "knn", "gbm", "mlp")

# Preprocessor kind per family (value strings match features.PreprocessorKind).
PREPROCESSOR_FOR_FAMILY: dict[str, str] = {
    "lr": "median_impute_minmax",
    "mlp": "median_impute_minmax",
    "knn": "median_impute_standard",
    "gbm": "passthrough",
}


@dataclass(frozen=True)
class LogisticParams:
    c: float = 1.0
    max_iter: int = 100


@dataclass(frozen=True)
class KnnParams:
    n_neighbors: int = 5
    power: int = 2
    leaf_size: int = 30          # recorded for provenance; exact search ignores it


@dataclass(frozen=True)
class GbmParams:
    num_leaves: int = 31
    learning_rate: float = 0.1
    max_depth: int = 6
    n_estimators: int = 200


@dataclass(frozen=True)
class MlpParams:
    hidden_sizes: tuple[int, ...] = (100,)
    activation: str = "relu"
    alpha: float = 0.0001
    solver: str = "adam"
    learning_rate: str = "constant"


HYPERPARAM_TYPES: dict[str, type] = {
    "lr": LogisticParams,
    "knn": KnnParams,
    "gbm": GbmParams,
    "mlp": MlpParams,
}


class Model(Protocol):
    family: str

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


Trainer = Callable[[np.ndarray, np.ndarray, object, int], Model]

_REGISTRY: dict[str, Trainer] = {}
_LOADERS: dict[str, Callable[[dict], Model]] = {}


def register_family(name: str, trainer: Trainer, loader: Callable[[dict], Model]) -> None:
    _REGISTRY[name] = trainer
    _LOADERS[name] = loader


def get_family(name: str) -> Trainer:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model family '{name}'") from None


def train_model(family: str, X: np.ndarray, y: np.ndarray, hp, seed: int = 0) -> Model:
    return get_family(family)(X, y, hp, seed)


def model_to_dict(model: Model) -> dict:
    data = model.to_dict()
    data["family"] = model.family
    return data


def model_from_dict(data: dict) -> Model:
    family = data["family"]
    try:
        loader = _LOADERS[family]
    except KeyError:
        raise ValueError(f"unknown model family '{family}'") from None
    return loader(data)


def check_training_labels(y: np.ndarray) -> np.ndarray:
    """Validate a binary label vector; both classes must be present."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("labels must be a 1-d vector")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if arr.min() == arr.max():
        raise ValueError("degenerate labels")
    return arr


def check_feature_width(X: np.ndarray, expected: int, context: str) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != expected:
        raise ValueError(
            f"{context}: expected {expected} features, got {arr.shape[1]}"
        )
    return arr[0] if single else arr


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Clipped at +-500 to keep exp() finite; sigmoid saturates long before.
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def hyperparams_to_dict(hp) -> dict:
    data = asdict(hp)
    if "hidden_sizes" in data:
        data["hidden_sizes"] = list(data["hidden_sizes"])
    return data


def hyperparams_from_dict(family: str, data: dict):
    cls = HYPERPARAM_TYPES[family]
    kwargs = dict(data)
    if "hidden_sizes" in kwargs:
        kwargs["hidden_sizes"] = tuple(int(h) for h in kwargs["hidden_sizes"])
    return cls(**kwargs)
