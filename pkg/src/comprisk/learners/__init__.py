"""Model families trained inside the ensemble protocol.

Four families ship in-repo: regularized logistic regression, k-nearest
neighbours, gradient-boosted trees and a multilayer perceptron. The
registry in `base` is open; additional families can be registered without
touching the pipeline.
"""

from .base import (
    FAMILY_ORDER,
    PREPROCESSOR_FOR_FAMILY,
    GbmParams,
    KnnParams,
    LogisticParams,
    MlpParams,
    get_family,
    model_from_dict,
    model_to_dict,
    register_family,
    train_model,
)
from .gbm import GbmModel, train_gbm
from .knn import KnnModel, train_knn
from .logistic import LogisticModel, train_logistic
from .mlp import MlpModel, train_mlp

__all__ = [
    "FAMILY_ORDER",
    "PREPROCESSOR_FOR_FAMILY",
    "LogisticParams",
    "KnnParams",
    "GbmParams",
    "MlpParams",
    "LogisticModel",
    "KnnModel",
    "GbmModel",
    "MlpModel",
    "train_logistic",
    "train_knn",
    "train_gbm",
    "train_mlp",
    "train_model",
    "get_family",
    "register_family",
    "model_to_dict",
    "model_from_dict",
]
