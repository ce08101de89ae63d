"""Feedforward binary classifier trained by minibatch SGD or Adam.

Architecture: given hidden layer sizes, tanh or relu activations, one
sigmoid output unit. The objective is mean log-loss plus an L2 penalty
alpha * sum ||W||^2 / (2n) over weight matrices (biases unpenalized).

Training runs for at most `EPOCH_BUDGET` epochs with deterministic
seeded shuffling, stopping early after `EARLY_STOP_PATIENCE` epochs
without improvement in full-training loss. The "adaptive" learning-rate
schedule halves the step whenever the loss fails to improve for
`PLATEAU_PATIENCE` consecutive epochs (sgd solver only; adam manages its
own scaling). Weight init is Glorot uniform from the given seed, so a fit
is a pure function of (X, y, hp, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import MlpParams, check_feature_width, check_training_labels, register_family, sigmoid

EPOCH_BUDGET = 200
EARLY_STOP_PATIENCE = 10
PLATEAU_PATIENCE = 2
IMPROVEMENT_TOL = 1e-7
BATCH_SIZE = 32
SGD_LEARNING_RATE_INIT = 0.1
ADAM_LEARNING_RATE_INIT = 0.01
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MIN_LEARNING_RATE = 1e-6

ACTIVATIONS = ("tanh", "relu")
SOLVERS = ("sgd", "adam")
SCHEDULES = ("constant", "adaptive")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(a: np.ndarray, kind: str) -> np.ndarray:
    # Expressed in terms of the activation output a.
    return 1.0 - a * a if kind == "tanh" else (a > 0.0).astype(np.float64)


def forward_backward(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    activation: str,
    alpha: float,
    n_total: int,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and analytic gradients for one batch.

    Both the data term and the L2 term are normalized by `n_total` (the
    full training count), so batch gradients are unbiased estimates of the
    full-objective gradient scaled by batch_size / n_total.
    """
    acts = [X]
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ W + b
        acts.append(_act(z, activation) if i < len(weights) - 1 else sigmoid(z))
    p = acts[-1][:, 0]

    eps = 1e-12
    data_loss = -np.sum(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)) / n_total
    penalty = alpha / (2.0 * n_total) * sum(float((W * W).sum()) for W in weights)
    loss = data_loss + penalty

    grad_ws: list[np.ndarray] = [None] * len(weights)
    grad_bs: list[np.ndarray] = [None] * len(biases)
    delta = (p - y)[:, None] / n_total
    for i in range(len(weights) - 1, -1, -1):
        grad_ws[i] = acts[i].T @ delta + (alpha / n_total) * weights[i]
        grad_bs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * _act_grad(acts[i], activation)
    return float(loss), grad_ws, grad_bs


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hp: MlpParams
    n_epochs_run: int = 0
    family: str = field(default="mlp", init=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        arr = check_feature_width(X, self.weights[0].shape[0], "mlp predict")
        single = arr.ndim == 1
        a = np.atleast_2d(arr)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = _act(z, self.hp.activation) if i < len(self.weights) - 1 else sigmoid(z)
        probs = a[:, 0]
        return float(probs[0]) if single else probs

    def to_dict(self) -> dict:
        return {
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "hp": {
                "hidden_sizes": list(self.hp.hidden_sizes),
                "activation": self.hp.activation,
                "alpha": self.hp.alpha,
                "solver": self.hp.solver,
                "learning_rate": self.hp.learning_rate,
            },
            "n_epochs_run": self.n_epochs_run,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        hp = data["hp"]
        return cls(
            weights=[np.asarray(W, dtype=np.float64) for W in data["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
            hp=MlpParams(
                hidden_sizes=tuple(int(h) for h in hp["hidden_sizes"]),
                activation=hp["activation"],
                alpha=float(hp["alpha"]),
                solver=hp["solver"],
                learning_rate=hp["learning_rate"],
            ),
            n_epochs_run=int(data.get("n_epochs_run", 0)),
        )


def _init_params(
    sizes: list[int], rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return weights, biases


def _full_loss(weights, biases, X, y, activation, alpha) -> float:
    loss, _, _ = forward_backward(weights, biases, X, y, activation, alpha, X.shape[0])
    return loss


def train_mlp(
    X: np.ndarray, y: np.ndarray, hp: MlpParams | None = None, seed: int = 0
) -> MlpModel:
    hp = hp or MlpParams()
    if not hp.hidden_sizes or any(int(h) < 1 for h in hp.hidden_sizes):
        raise ValueError("hidden_sizes must be a non-empty tuple of positive ints")
    if hp.activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    if hp.solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}")
    if hp.learning_rate not in SCHEDULES:
        raise ValueError(f"learning_rate must be one of {SCHEDULES}")
    if hp.alpha < 0:
        raise ValueError("alpha must be >= 0")
    y_arr = check_training_labels(y)
    X_arr = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X_arr.shape[0] != y_arr.size:
        raise ValueError("X and y row counts differ")
    if np.isnan(X_arr).any():
        raise ValueError("mlp requires imputed inputs (found NaN)")

    n, d = X_arr.shape
    sizes = [d, *[int(h) for h in hp.hidden_sizes], 1]
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(sizes, rng)

    solver = hp.solver
    lr = ADAM_LEARNING_RATE_INIT if solver == "adam" else SGD_LEARNING_RATE_INIT
    if solver == "adam":
        m_w = [np.zeros_like(W) for W in weights]
        v_w = [np.zeros_like(W) for W in weights]
        m_b = [np.zeros_like(b) for b in biases]
        v_b = [np.zeros_like(b) for b in biases]
        t_step = 0

    batch = min(BATCH_SIZE, n)
    best_loss = np.inf
    stall = 0
    plateau = 0
    epochs_run = 0

    for _ in range(EPOCH_BUDGET):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            _, grad_ws, grad_bs = forward_backward(
                weights, biases, X_arr[idx], y_arr[idx], hp.activation, hp.alpha, n
            )
            # Batch gradients above are scaled by batch/n; rescale to a
            # per-example average so step sizes do not depend on n.
            scale = n / idx.size
            if solver == "adam":
                t_step += 1
                corr1 = 1.0 - ADAM_BETA1**t_step
                corr2 = 1.0 - ADAM_BETA2**t_step
                for i in range(len(weights)):
                    gw = grad_ws[i] * scale
                    gb = grad_bs[i] * scale
                    m_w[i] = ADAM_BETA1 * m_w[i] + (1 - ADAM_BETA1) * gw
                    v_w[i] = ADAM_BETA2 * v_w[i] + (1 - ADAM_BETA2) * gw * gw
                    m_b[i] = ADAM_BETA1 * m_b[i] + (1 - ADAM_BETA1) * gb
                    v_b[i] = ADAM_BETA2 * v_b[i] + (1 - ADAM_BETA2) * gb * gb
                    weights[i] -= lr * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + ADAM_EPS)
                    biases[i] -= lr * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + ADAM_EPS)
            else:
                for i in range(len(weights)):
                    weights[i] -= lr * grad_ws[i] * scale
                    biases[i] -= lr * grad_bs[i] * scale

        epochs_run += 1
        loss = _full_loss(weights, biases, X_arr, y_arr, hp.activation, hp.alpha)
        if loss < best_loss - IMPROVEMENT_TOL:
            best_loss = loss
            stall = 0
            plateau = 0
        else:
            stall += 1
            plateau += 1
            if solver == "sgd" and hp.learning_rate == "adaptive" and plateau >= PLATEAU_PATIENCE:
                lr = max(lr * 0.5, MIN_LEARNING_RATE)
                plateau = 0
        if stall >= EARLY_STOP_PATIENCE:
            break

    return MlpModel(weights=weights, biases=biases, hp=hp, n_epochs_run=epochs_run)


register_family("mlp", train_mlp, MlpModel.from_dict)
