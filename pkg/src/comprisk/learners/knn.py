"""Exact k-nearest-neighbour risk estimation under Minkowski distance.

The prediction for a query is the positive fraction among its k nearest
training rows. Search is exact (no tree index); `leaf_size` is recorded
for provenance but has no effect on results. Distance ties are broken by
a stable content hash of the training row, so predictions do not depend
on training-row order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .base import KnnParams, check_feature_width, check_training_labels, register_family


def _row_keys(X: np.ndarray) -> np.ndarray:
    """Stable 64-bit content hash per row; identical rows collide by design."""
    keys = np.empty(X.shape[0], dtype=np.uint64)
    for i in range(X.shape[0]):
        digest = hashlib.sha256(X[i].tobytes()).digest()
        keys[i] = int.from_bytes(digest[:8], "big")
    return keys


@dataclass
class KnnModel:
    train_x: np.ndarray
    train_y: np.ndarray
    hp: KnnParams
    row_keys: np.ndarray | None = None
    family: str = field(default="knn", init=False)

    def __post_init__(self):
        if self.row_keys is None:
            self.row_keys = _row_keys(self.train_x)

    def _distances(self, queries: np.ndarray) -> np.ndarray:
        # Chunked so the (chunk, n_train, n_features) intermediate stays small.
        p = self.hp.power
        n_q = queries.shape[0]
        out = np.empty((n_q, self.train_x.shape[0]), dtype=np.float64)
        chunk = max(1, 4_000_000 // max(1, self.train_x.size))
        for start in range(0, n_q, chunk):
            block = queries[start : start + chunk]
            diff = np.abs(block[:, None, :] - self.train_x[None, :, :])
            if p == 1:
                out[start : start + chunk] = diff.sum(axis=2)
            elif p == 2:
                out[start : start + chunk] = np.sqrt((diff * diff).sum(axis=2))
            else:
                out[start : start + chunk] = (diff**p).sum(axis=2) ** (1.0 / p)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        arr = check_feature_width(X, self.train_x.shape[1], "knn predict")
        single = arr.ndim == 1
        queries = np.atleast_2d(arr)
        if np.isnan(queries).any():
            raise ValueError("knn requires imputed inputs (found NaN)")
        dists = self._distances(queries)
        k = self.hp.n_neighbors
        out = np.empty(queries.shape[0], dtype=np.float64)
        for i in range(queries.shape[0]):
            # lexsort: last key is primary, so order is (distance, key, label).
            order = np.lexsort((self.train_y, self.row_keys, dists[i]))
            out[i] = float(self.train_y[order[:k]].mean())
        return float(out[0]) if single else out

    def kneighbors(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the k nearest rows for one query."""
        queries = np.atleast_2d(np.asarray(x, dtype=np.float64))
        dists = self._distances(queries)[0]
        order = np.lexsort((self.train_y, self.row_keys, dists))
        top = order[: self.hp.n_neighbors]
        return top, dists[top]

    def to_dict(self) -> dict:
        return {
            "train_x": self.train_x.tolist(),
            "train_y": self.train_y.tolist(),
            "hp": {
                "n_neighbors": self.hp.n_neighbors,
                "power": self.hp.power,
                "leaf_size": self.hp.leaf_size,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnnModel":
        hp = data["hp"]
        return cls(
            train_x=np.asarray(data["train_x"], dtype=np.float64),
            train_y=np.asarray(data["train_y"], dtype=np.float64),
            hp=KnnParams(
                n_neighbors=int(hp["n_neighbors"]),
                power=int(hp["power"]),
                leaf_size=int(hp["leaf_size"]),
            ),
        )


def train_knn(
    X: np.ndarray, y: np.ndarray, hp: KnnParams | None = None, seed: int = 0
) -> KnnModel:
    """Store the training set; `seed` is accepted for interface parity."""
    hp = hp or KnnParams()
    y_arr = check_training_labels(y)
    X_arr = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X_arr.shape[0] != y_arr.size:
        raise ValueError("X and y row counts differ")
    if np.isnan(X_arr).any():
        raise ValueError("knn requires imputed inputs (found NaN)")
    if hp.n_neighbors < 1:
        raise ValueError("n_neighbors must be >= 1")
    if hp.n_neighbors > X_arr.shape[0]:
        raise ValueError(
            f"n_neighbors={hp.n_neighbors} exceeds training size {X_arr.shape[0]}"
        )
    if hp.power < 1:
        raise ValueError("power must be >= 1")
    return KnnModel(train_x=X_arr.copy(), train_y=y_arr.copy(), hp=hp)


register_family("knn", train_knn, KnnModel.from_dict)
