"""Gradient-boosted decision trees on logistic loss, missing-value aware.

Trees grow leaf-wise: the leaf with the largest second-order split gain
splits first, until `num_leaves` is reached, `max_depth` would be
exceeded, or no split has positive gain. Split search is exact over all
feature values (no histogram binning). Rows whose split feature is NaN
follow a per-node default direction, learned during search as the side
that maximizes gain; nodes that saw no missing rows default left.

Leaf values are Newton steps -G / max(H, 1e-6); the prediction is
sigmoid(base_score + learning_rate * sum of leaf values), with base_score
the log-odds of the training prevalence. With n_estimators = 0 the model
is the prior alone. Training uses no randomness.

The hot loops are numba-compiled; feature orderings are sorted once per
fit and partitioned down the tree rather than re-sorted per node.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .base import (
    GbmParams,
    check_training_labels,
    register_family,
    sigmoid,
)

HESSIAN_FLOOR = 1e-6
MIN_SPLIT_GAIN = 1e-12


@njit(cache=True)
def _best_split(vals, order, n_present, g, h):
    """Best (gain, feature, threshold, missing_left) for one node.

    `vals` is (F, m) feature-major, `order[j]` gives local row indices
    sorted ascending by feature j with NaN rows at the tail, `n_present[j]`
    counts the non-NaN entries. Candidates are midpoints between adjacent
    distinct values, each tried with missing routed left and right, plus a
    boundary candidate sending all present rows left and missing right.
    Exact gain ties keep the first candidate in scan order.
    """
    F, m = vals.shape
    total_g = 0.0
    total_h = 0.0
    for i in range(m):
        total_g += g[i]
        total_h += h[i]
    parent_score = (total_g * total_g) / max(total_h, HESSIAN_FLOOR)

    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    best_miss_left = True

    for j in range(F):
        p = n_present[j]
        if p < 1:
            continue
        tpg = 0.0
        tph = 0.0
        for k in range(p):
            r = order[j, k]
            tpg += g[r]
            tph += h[r]
        g_miss = total_g - tpg
        h_miss = total_h - tph
        n_miss = m - p

        pg = 0.0
        ph = 0.0
        for k in range(p - 1):
            r = order[j, k]
            pg += g[r]
            ph += h[r]
            v = vals[j, r]
            v_next = vals[j, order[j, k + 1]]
            if v == v_next:
                continue
            thr = 0.5 * (v + v_next)

            if n_miss == 0:
                gl = pg
                hl = ph
                gr = total_g - gl
                hr = total_h - hl
                gain = 0.5 * (
                    gl * gl / max(hl, HESSIAN_FLOOR)
                    + gr * gr / max(hr, HESSIAN_FLOOR)
                    - parent_score
                )
                if gain > best_gain and gain > MIN_SPLIT_GAIN:
                    best_gain = gain
                    best_feat = j
                    best_thr = thr
                    best_miss_left = True
            else:
                # missing routed right
                gl = pg
                hl = ph
                gr = total_g - gl
                hr = total_h - hl
                gain = 0.5 * (
                    gl * gl / max(hl, HESSIAN_FLOOR)
                    + gr * gr / max(hr, HESSIAN_FLOOR)
                    - parent_score
                )
                if gain > best_gain and gain > MIN_SPLIT_GAIN:
                    best_gain = gain
                    best_feat = j
                    best_thr = thr
                    best_miss_left = False
                # missing routed left
                gl = pg + g_miss
                hl = ph + h_miss
                gr = total_g - gl
                hr = total_h - hl
                gain = 0.5 * (
                    gl * gl / max(hl, HESSIAN_FLOOR)
                    + gr * gr / max(hr, HESSIAN_FLOOR)
                    - parent_score
                )
                if gain > best_gain and gain > MIN_SPLIT_GAIN:
                    best_gain = gain
                    best_feat = j
                    best_thr = thr
                    best_miss_left = True

        if n_miss > 0 and p >= 1:
            # boundary: every present row left, every missing row right
            thr = vals[j, order[j, p - 1]]
            gl = tpg
            hl = tph
            gr = g_miss
            hr = h_miss
            gain = 0.5 * (
                gl * gl / max(hl, HESSIAN_FLOOR)
                + gr * gr / max(hr, HESSIAN_FLOOR)
                - parent_score
            )
            if gain > best_gain and gain > MIN_SPLIT_GAIN:
                best_gain = gain
                best_feat = j
                best_thr = thr
                best_miss_left = False

    return best_gain, best_feat, best_thr, best_miss_left


@njit(cache=True)
def _partition(vals, order, n_present, g, h, rows, goes_left):
    """Split one node payload into left/right payloads, keeping sort order."""
    F, m = vals.shape
    m_left = 0
    for i in range(m):
        if goes_left[i]:
            m_left += 1
    m_right = m - m_left

    new_idx = np.empty(m, dtype=np.int32)
    li = 0
    ri = 0
    for i in range(m):
        if goes_left[i]:
            new_idx[i] = li
            li += 1
        else:
            new_idx[i] = ri
            ri += 1

    vals_l = np.empty((F, m_left), dtype=np.float64)
    vals_r = np.empty((F, m_right), dtype=np.float64)
    g_l = np.empty(m_left, dtype=np.float64)
    g_r = np.empty(m_right, dtype=np.float64)
    h_l = np.empty(m_left, dtype=np.float64)
    h_r = np.empty(m_right, dtype=np.float64)
    rows_l = np.empty(m_left, dtype=np.int64)
    rows_r = np.empty(m_right, dtype=np.int64)
    for i in range(m):
        t = new_idx[i]
        if goes_left[i]:
            g_l[t] = g[i]
            h_l[t] = h[i]
            rows_l[t] = rows[i]
            for j in range(F):
                vals_l[j, t] = vals[j, i]
        else:
            g_r[t] = g[i]
            h_r[t] = h[i]
            rows_r[t] = rows[i]
            for j in range(F):
                vals_r[j, t] = vals[j, i]

    order_l = np.empty((F, m_left), dtype=np.int32)
    order_r = np.empty((F, m_right), dtype=np.int32)
    n_present_l = np.empty(F, dtype=np.int32)
    n_present_r = np.empty(F, dtype=np.int32)
    for j in range(F):
        li = 0
        ri = 0
        for k in range(m):
            r = order[j, k]
            if goes_left[r]:
                order_l[j, li] = new_idx[r]
                li += 1
            else:
                order_r[j, ri] = new_idx[r]
                ri += 1
        npl = 0
        for k in range(n_present[j]):
            if goes_left[order[j, k]]:
                npl += 1
        n_present_l[j] = npl
        n_present_r[j] = n_present[j] - npl

    return (
        vals_l, order_l, n_present_l, g_l, h_l, rows_l,
        vals_r, order_r, n_present_r, g_r, h_r, rows_r,
    )


@njit(cache=True)
def _forest_margins(X, roots, feature, threshold, miss_left, left, right, value, base, lr):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for t in range(roots.size):
            node = roots[t]
            while left[node] >= 0:
                x = X[i, feature[node]]
                if np.isnan(x):
                    node = left[node] if miss_left[node] else right[node]
                elif x <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[i] = base + lr * s
    return out


@dataclass
class Tree:
    """One regression tree as parallel node arrays; node 0 is the root.

    `left`/`right` hold -1 at leaves. `cover` counts the training rows that
    reached each node, which downstream attribution uses as path weights.
    """

    feature: np.ndarray
    threshold: np.ndarray
    miss_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def to_nested(self, node: int = 0) -> dict:
        if self.left[node] < 0:
            return {"value": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "slot": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "missing": "left" if self.miss_left[node] else "right",
            "cover": float(self.cover[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        feature: list[int] = []
        threshold: list[float] = []
        miss_left: list[bool] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []
        cover: list[float] = []

        def walk(node: dict) -> int:
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            miss_left.append(True)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            cover.append(float(node["cover"]))
            if "value" in node:
                value[idx] = float(node["value"])
            else:
                feature[idx] = int(node["slot"])
                threshold[idx] = float(node["threshold"])
                miss_left[idx] = node["missing"] == "left"
                left[idx] = walk(node["left"])
                right[idx] = walk(node["right"])
            return idx

        walk(root)
        return cls(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            miss_left=np.asarray(miss_left, dtype=np.bool_),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
            cover=np.asarray(cover, dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.miss_left: list[bool] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.cover: list[float] = []

    def new_node(self, leaf_value: float, cover: float) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.miss_left.append(True)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(leaf_value)
        self.cover.append(cover)
        return idx

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            miss_left=np.asarray(self.miss_left, dtype=np.bool_),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
        )


def _leaf_value(g_sum: float, h_sum: float) -> float:
    return -g_sum / max(h_sum, HESSIAN_FLOOR)


def _build_tree(vals, order, n_present, g, h, rows, hp: GbmParams):
    """Grow one tree leaf-wise; returns (Tree, leaf rows, leaf values)."""
    builder = _TreeBuilder()
    payloads: dict[int, tuple] = {}
    depths: dict[int, int] = {}

    root = builder.new_node(_leaf_value(float(g.sum()), float(h.sum())), float(g.size))
    payloads[root] = (vals, order, n_present, g, h, rows)
    depths[root] = 0

    heap: list[tuple[float, int, int]] = []
    counter = 0

    def consider(node: int) -> None:
        nonlocal counter
        payload = payloads[node]
        if depths[node] >= hp.max_depth or payload[3].size < 2:
            return
        gain, feat, thr, miss_left = _best_split(*payload[:5])
        if feat >= 0:
            heapq.heappush(heap, (-gain, counter, node, feat, thr, miss_left))
            counter += 1

    consider(root)
    leaves = 1
    while heap and leaves < hp.num_leaves:
        _, _, node, feat, thr, miss_left = heapq.heappop(heap)
        n_vals, n_order, n_np, n_g, n_h, n_rows = payloads.pop(node)
        x = n_vals[feat]
        goes_left = np.where(np.isnan(x), miss_left, x <= thr)
        if not goes_left.any() or goes_left.all():
            # Midpoint rounding landed every row on one side; keep as leaf.
            payloads[node] = (n_vals, n_order, n_np, n_g, n_h, n_rows)
            continue
        parts = _partition(n_vals, n_order, n_np, n_g, n_h, n_rows, goes_left)
        left_payload, right_payload = parts[:6], parts[6:]

        left_id = builder.new_node(
            _leaf_value(float(left_payload[3].sum()), float(left_payload[4].sum())),
            float(left_payload[3].size),
        )
        right_id = builder.new_node(
            _leaf_value(float(right_payload[3].sum()), float(right_payload[4].sum())),
            float(right_payload[3].size),
        )
        builder.feature[node] = feat
        builder.threshold[node] = thr
        builder.miss_left[node] = bool(miss_left)
        builder.left[node] = left_id
        builder.right[node] = right_id
        builder.value[node] = 0.0
        payloads[left_id] = left_payload
        payloads[right_id] = right_payload
        depths[left_id] = depths[node] + 1
        depths[right_id] = depths[node] + 1
        leaves += 1
        consider(left_id)
        consider(right_id)

    leaf_rows = [payloads[n][5] for n in sorted(payloads)]
    leaf_values = [builder.value[n] for n in sorted(payloads)]
    return builder.finish(), leaf_rows, leaf_values


@dataclass
class GbmModel:
    base_score: float
    trees: list[Tree]
    hp: GbmParams
    n_features: int
    family: str = field(default="gbm", init=False)
    _flat: tuple | None = field(default=None, init=False, repr=False)

    def _flatten(self) -> tuple:
        if self._flat is None:
            roots = []
            offset = 0
            parts = {k: [] for k in ("feature", "threshold", "miss_left", "left", "right", "value")}
            for tree in self.trees:
                roots.append(offset)
                shift = np.where(tree.left >= 0, offset, 0).astype(np.int32)
                parts["feature"].append(tree.feature)
                parts["threshold"].append(tree.threshold)
                parts["miss_left"].append(tree.miss_left)
                parts["left"].append(tree.left + shift)
                parts["right"].append(tree.right + shift)
                parts["value"].append(tree.value)
                offset += tree.n_nodes
            if offset == 0:
                self._flat = (
                    np.zeros(0, np.int64),
                    np.zeros(0, np.int32),
                    np.zeros(0, np.float64),
                    np.zeros(0, np.bool_),
                    np.zeros(0, np.int32),
                    np.zeros(0, np.int32),
                    np.zeros(0, np.float64),
                )
            else:
                self._flat = (
                    np.asarray(roots, dtype=np.int64),
                    np.concatenate(parts["feature"]),
                    np.concatenate(parts["threshold"]),
                    np.concatenate(parts["miss_left"]),
                    np.concatenate(parts["left"]),
                    np.concatenate(parts["right"]),
                    np.concatenate(parts["value"]),
                )
        return self._flat

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        arr = np.asarray(X, dtype=np.float64)
        single = arr.ndim == 1
        arr = np.ascontiguousarray(np.atleast_2d(arr))
        if arr.shape[1] != self.n_features:
            raise ValueError(
                f"gbm predict: expected {self.n_features} features, got {arr.shape[1]}"
            )
        roots, feature, threshold, miss_left, left, right, value = self._flatten()
        margins = _forest_margins(
            arr, roots, feature, threshold, miss_left, left, right, value,
            self.base_score, self.hp.learning_rate,
        )
        return float(margins[0]) if single else margins

    def predict(self, X: np.ndarray) -> np.ndarray:
        margins = self.predict_margin(X)
        if isinstance(margins, float):
            return float(sigmoid(np.asarray([margins]))[0])
        return sigmoid(margins)

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "n_features": self.n_features,
            "hp": {
                "num_leaves": self.hp.num_leaves,
                "learning_rate": self.hp.learning_rate,
                "max_depth": self.hp.max_depth,
                "n_estimators": self.hp.n_estimators,
            },
            "trees": [tree.to_nested() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbmModel":
        hp = data["hp"]
        return cls(
            base_score=float(data["base_score"]),
            trees=[Tree.from_nested(t) for t in data["trees"]],
            hp=GbmParams(
                num_leaves=int(hp["num_leaves"]),
                learning_rate=float(hp["learning_rate"]),
                max_depth=int(hp["max_depth"]),
                n_estimators=int(hp["n_estimators"]),
            ),
            n_features=int(data["n_features"]),
        )


def train_gbm(
    X: np.ndarray, y: np.ndarray, hp: GbmParams | None = None, seed: int = 0
) -> GbmModel:
    """Fit the boosted forest; `seed` is accepted for interface parity."""
    hp = hp or GbmParams()
    if hp.num_leaves < 2:
        raise ValueError("num_leaves must be >= 2")
    if hp.max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if hp.n_estimators < 0:
        raise ValueError("n_estimators must be >= 0")
    if hp.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    y_arr = check_training_labels(y)
    X_arr = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    n, n_features = X_arr.shape
    if n != y_arr.size:
        raise ValueError("X and y row counts differ")

    prevalence = float(y_arr.mean())
    base = math.log(prevalence / (1.0 - prevalence))

    # Feature orderings depend only on X: sort once, partition down the tree.
    vals_root = np.ascontiguousarray(X_arr.T)
    order_root = np.ascontiguousarray(np.argsort(X_arr, axis=0, kind="stable").T.astype(np.int32))
    n_present_root = (n - np.isnan(X_arr).sum(axis=0)).astype(np.int32)
    rows_root = np.arange(n, dtype=np.int64)

    margin = np.full(n, base, dtype=np.float64)
    trees: list[Tree] = []
    for _ in range(hp.n_estimators):
        p = sigmoid(margin)
        g = p - y_arr
        h = p * (1.0 - p)
        tree, leaf_rows, leaf_values = _build_tree(
            vals_root, order_root, n_present_root, g, h, rows_root, hp
        )
        for rows_leaf, v in zip(leaf_rows, leaf_values):
            margin[rows_leaf] += hp.learning_rate * v
        trees.append(tree)

    return GbmModel(base_score=base, trees=trees, hp=hp, n_features=n_features)


register_family("gbm", train_gbm, GbmModel.from_dict)
