"""L2-regularized logistic regression, trained by full-batch gradient descent.

The objective is mean log-loss plus ||w||^2 / (2 * c * n); the intercept is
not penalized, so with extreme regularization the model still learns the
base rate. Each epoch takes one gradient step with backtracking line
search, which keeps training deterministic (no RNG at all). Training stops
when the epoch-over-epoch loss improvement falls below 1e-8 or after
`max_iter` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import (
    LogisticParams,
    check_feature_width,
    check_training_labels,
    register_family,
    sigmoid,
)

LOSS_IMPROVEMENT_TOL = 1e-8
_BACKTRACK_SHRINK = 0.5
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 50


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    hp: LogisticParams
    n_epochs_run: int = 0
    family: str = field(default="lr", init=False)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        arr = check_feature_width(X, self.weights.size, "logistic predict")
        single = arr.ndim == 1
        margins = np.atleast_2d(arr) @ self.weights + self.bias
        return float(margins[0]) if single else margins

    def predict(self, X: np.ndarray) -> np.ndarray:
        arr = check_feature_width(X, self.weights.size, "logistic predict")
        single = arr.ndim == 1
        margins = np.atleast_2d(arr) @ self.weights + self.bias
        probs = sigmoid(margins)
        return float(probs[0]) if single else probs

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "hp": {"c": self.hp.c, "max_iter": self.hp.max_iter},
            "n_epochs_run": self.n_epochs_run,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogisticModel":
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            hp=LogisticParams(c=float(data["hp"]["c"]), max_iter=int(data["hp"]["max_iter"])),
            n_epochs_run=int(data.get("n_epochs_run", 0)),
        )


def _loss(X, y, w, b, inv_cn):
    p = sigmoid(X @ w + b)
    eps = 1e-12
    ll = -np.mean(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps))
    return ll + 0.5 * inv_cn * float(w @ w)


def train_logistic(
    X: np.ndarray, y: np.ndarray, hp: LogisticParams | None = None, seed: int = 0
) -> LogisticModel:
    """Fit the model; `seed` is accepted for interface parity and unused."""
    hp = hp or LogisticParams()
    if hp.c <= 0:
        raise ValueError("c must be positive")
    if hp.max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    y_arr = check_training_labels(y)
    X_arr = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X_arr.shape[0] != y_arr.size:
        raise ValueError("X and y row counts differ")
    if np.isnan(X_arr).any():
        raise ValueError("logistic regression requires imputed inputs (found NaN)")

    n, d = X_arr.shape
    inv_cn = 1.0 / (hp.c * n)
    w = np.zeros(d, dtype=np.float64)
    b = 0.0
    loss = _loss(X_arr, y_arr, w, b, inv_cn)
    step = 1.0
    epochs = 0

    for _ in range(hp.max_iter):
        p = sigmoid(X_arr @ w + b)
        grad_w = X_arr.T @ (p - y_arr) / n + inv_cn * w
        grad_b = float(np.mean(p - y_arr))
        grad_sq = float(grad_w @ grad_w) + grad_b * grad_b

        # Backtracking line search on the Armijo condition; the accepted
        # step seeds the next epoch (doubled) so step sizes adapt both ways.
        eta = step * 2.0
        new_loss = loss
        for _ in range(_MAX_BACKTRACKS):
            cand_w = w - eta * grad_w
            cand_b = b - eta * grad_b
            new_loss = _loss(X_arr, y_arr, cand_w, cand_b, inv_cn)
            if new_loss <= loss - _ARMIJO * eta * grad_sq:
                break
            eta *= _BACKTRACK_SHRINK
        else:
            epochs += 1
            break

        w, b, step = cand_w, cand_b, eta
        epochs += 1
        improvement = loss - new_loss
        loss = new_loss
        if improvement < LOSS_IMPROVEMENT_TOL:
            break

    return LogisticModel(weights=w, bias=b, hp=hp, n_epochs_run=epochs)


register_family("lr", train_logistic, LogisticModel.from_dict)
