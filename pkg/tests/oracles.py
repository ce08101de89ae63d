"""Independent reference implementations used to cross-check the package.

Everything here is written from the definitions, deliberately the slow
way: pairwise counting, per-threshold rescanning, exhaustive enumeration,
subset-summed Shapley values and finite differences. Nothing imports the
implementation modules under test except for trivially shared dataclass
shapes (the brute-force tree walker consumes the nested JSON form, not
the fitted objects).
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np


def auroc_pairwise(y: np.ndarray, s: np.ndarray) -> float:
    """Probability a positive outscores a negative, ties counting half."""
    pos = s[y == 1]
    neg = s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def auprc_rescan(y: np.ndarray, s: np.ndarray) -> float:
    """Average precision by re-scanning the whole sample per threshold."""
    n_pos = int((y == 1).sum())
    ap = 0.0
    prev_recall = 0.0
    for thr in sorted(set(s.tolist()), reverse=True):
        sel = s >= thr
        tp = int((y[sel] == 1).sum())
        fp = int(sel.sum()) - tp
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def monotone_ls_fit(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Least-squares monotone (non-decreasing in score) fit by exhaustion.

    Ties in score are constrained to share a fitted value. Enumerates
    every contiguous block partition of the unique scores, keeps the
    feasible (non-decreasing block means) partitions, and returns the
    per-input fitted values of the SSE minimizer. Unique by convexity.
    """
    order = np.argsort(scores, kind="mergesort")
    s_sorted = scores[order]
    t_sorted = targets[order]

    group_sums: list[float] = []
    group_counts: list[int] = []
    group_targets: list[np.ndarray] = []
    i = 0
    while i < s_sorted.size:
        j = i
        while j + 1 < s_sorted.size and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        group_sums.append(float(t_sorted[i : j + 1].sum()))
        group_counts.append(j + 1 - i)
        group_targets.append(t_sorted[i : j + 1])
        i = j + 1

    g = len(group_sums)
    best_sse = math.inf
    best_values: np.ndarray | None = None
    for cuts in product((False, True), repeat=g - 1):
        blocks = [[0]]
        for k, cut in enumerate(cuts):
            if cut:
                blocks.append([])
            blocks[-1].append(k + 1)
        means = [
            sum(group_sums[k] for k in block) / sum(group_counts[k] for k in block)
            for block in blocks
        ]
        if any(means[b + 1] < means[b] for b in range(len(means) - 1)):
            continue
        sse = 0.0
        values = np.empty(g)
        for block, mean in zip(blocks, means):
            for k in block:
                values[k] = mean
                sse += float(((group_targets[k] - mean) ** 2).sum())
        if sse < best_sse - 1e-15:
            best_sse = sse
            best_values = values

    fitted_sorted = np.empty(s_sorted.size)
    pos = 0
    for k, count in enumerate(group_counts):
        fitted_sorted[pos : pos + count] = best_values[k]
        pos += count
    fitted = np.empty(scores.size)
    fitted[order] = fitted_sorted
    return fitted


# -- brute-force Shapley over nested trees -----------------------------------


def _expected_value(node: dict, x: np.ndarray, known: frozenset) -> float:
    """Conditional expectation: known features follow x, others split by cover."""
    if "value" in node:
        return node["value"]
    left, right = node["left"], node["right"]
    if node["slot"] in known:
        xv = x[node["slot"]]
        if math.isnan(xv):
            child = left if node["missing"] == "left" else right
        else:
            child = left if xv <= node["threshold"] else right
        return _expected_value(child, x, known)
    wl, wr = left["cover"], right["cover"]
    return (
        wl * _expected_value(left, x, known) + wr * _expected_value(right, x, known)
    ) / (wl + wr)


def _subsets(items: tuple) -> list[frozenset]:
    out = []
    for r in range(len(items) + 1):
        for bits in product((False, True), repeat=len(items)):
            if sum(bits) == r:
                out.append(frozenset(it for it, b in zip(items, bits) if b))
    return out


def brute_force_shapley(
    nested_trees: list[dict], x: np.ndarray, n_features: int, scale: float = 1.0
) -> np.ndarray:
    """Exact Shapley values of the conditional-expectation game, summed
    over trees and scaled (by the boosting learning rate)."""
    phi = np.zeros(n_features)
    fact = [math.factorial(k) for k in range(n_features + 1)]
    for j in range(n_features):
        rest = tuple(k for k in range(n_features) if k != j)
        for subset in _subsets(rest):
            weight = fact[len(subset)] * fact[n_features - len(subset) - 1] / fact[n_features]
            for tree in nested_trees:
                with_j = _expected_value(tree, x, subset | {j})
                without_j = _expected_value(tree, x, subset)
                phi[j] += scale * weight * (with_j - without_j)
    return phi


def brute_force_base(nested_trees: list[dict], scale: float = 1.0) -> float:
    dummy = np.zeros(1)
    return scale * sum(_expected_value(t, dummy, frozenset()) for t in nested_trees)


def central_difference_gradients(loss_fn, weights, biases, h: float = 1e-6):
    """Numeric gradients of loss_fn(weights, biases) by central differences."""
    grad_ws = []
    grad_bs = []
    for li in range(len(weights)):
        grad = np.zeros_like(weights[li])
        for idx in np.ndindex(weights[li].shape):
            orig = weights[li][idx]
            weights[li][idx] = orig + h
            up = loss_fn(weights, biases)
            weights[li][idx] = orig - h
            down = loss_fn(weights, biases)
            weights[li][idx] = orig
            grad[idx] = (up - down) / (2 * h)
        grad_ws.append(grad)
    for li in range(len(biases)):
        grad = np.zeros_like(biases[li])
        for idx in np.ndindex(biases[li].shape):
            orig = biases[li][idx]
            biases[li][idx] = orig + h
            up = loss_fn(weights, biases)
            biases[li][idx] = orig - h
            down = loss_fn(weights, biases)
            biases[li][idx] = orig
            grad[idx] = (up - down) / (2 * h)
        grad_bs.append(grad)
    return grad_ws, grad_bs
