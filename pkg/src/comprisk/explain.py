"""Per-prediction feature attributions on the model margin scale.

For the boosted-tree family this is the exact polynomial-time TreeSHAP
walk: within each tree a path of (feature, zero_fraction, one_fraction,
permutation weight) elements is extended down every branch, splitting
weight between children by training cover for features outside the
conditioning set and following the input for features inside it. A
feature met twice on one path is unwound and re-extended so it is counted
once. Missing input slots follow each node's default direction. Summed
over trees and scaled by the learning rate, attributions satisfy local
accuracy: base value plus their sum equals the margin exactly.

For the logistic family the attribution is weight * (x - background mean)
per slot, with base value at the background mean.

Nearest-neighbour and perceptron families have no attribution here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .features import FEATURE_NAMES
from .learners.gbm import GbmModel, Tree
from .learners.logistic import LogisticModel

DEFAULT_TOP_K = 4


@dataclass(frozen=True)
class Attribution:
    """Margin-scale attribution; base_value + values.sum() is the margin."""

    base_value: float
    values: np.ndarray

    @property
    def margin(self) -> float:
        return float(self.base_value + self.values.sum())


@njit(cache=True)
def _unwound_sum(pz, po, pw, length, i):
    last = length - 1
    one = po[i]
    zero = pz[i]
    carry = pw[last]
    total = 0.0
    if one != 0.0:
        for j in range(last - 1, -1, -1):
            w_new = carry * (last + 1.0) / ((j + 1.0) * one)
            total += w_new
            carry = pw[j] - w_new * zero * (last - j) / (last + 1.0)
    else:
        for j in range(last - 1, -1, -1):
            total += pw[j] * (last + 1.0) / (zero * (last - j))
    return total


@njit(cache=True)
def _unwind(pf, pz, po, pw, length, i):
    last = length - 1
    one = po[i]
    zero = pz[i]
    carry = pw[last]
    if one != 0.0:
        for j in range(last - 1, -1, -1):
            old = pw[j]
            pw[j] = carry * (last + 1.0) / ((j + 1.0) * one)
            carry = old - pw[j] * zero * (last - j) / (last + 1.0)
    else:
        for j in range(last - 1, -1, -1):
            pw[j] = pw[j] * (last + 1.0) / (zero * (last - j))
    for j in range(i, last):
        pf[j] = pf[j + 1]
        pz[j] = pz[j + 1]
        po[j] = po[j + 1]
    return last


# Self-recursive; numba's on-disk cache cannot persist recursive overloads,
# so this function and its caller compile fresh per process.
@njit
def _shap_recurse(
    node, feature, threshold, miss_left, left, right, value, cover,
    x, phi, pf, pz, po, pw, plen, frac_zero, frac_one, parent_feat,
):
    # This call owns a fresh copy of the path, extended by one element.
    nf = np.empty(plen + 1, dtype=np.int64)
    nz = np.empty(plen + 1, dtype=np.float64)
    no = np.empty(plen + 1, dtype=np.float64)
    nw = np.empty(plen + 1, dtype=np.float64)
    for i in range(plen):
        nf[i] = pf[i]
        nz[i] = pz[i]
        no[i] = po[i]
        nw[i] = pw[i]
    nf[plen] = parent_feat
    nz[plen] = frac_zero
    no[plen] = frac_one
    nw[plen] = 1.0 if plen == 0 else 0.0
    for i in range(plen - 1, -1, -1):
        nw[i + 1] += frac_one * nw[i] * (i + 1.0) / (plen + 1.0)
        nw[i] = frac_zero * nw[i] * (plen - i) / (plen + 1.0)
    length = plen + 1

    if left[node] < 0:
        leaf = value[node]
        for i in range(1, length):
            total = _unwound_sum(nz, no, nw, length, i)
            phi[nf[i]] += total * (no[i] - nz[i]) * leaf
        return

    f = feature[node]
    xv = x[f]
    if np.isnan(xv):
        hot = left[node] if miss_left[node] else right[node]
    elif xv <= threshold[node]:
        hot = left[node]
    else:
        hot = right[node]
    cold = right[node] if hot == left[node] else left[node]

    incoming_zero = 1.0
    incoming_one = 1.0
    dup = -1
    for i in range(1, length):
        if nf[i] == f:
            dup = i
            break
    if dup >= 0:
        incoming_zero = nz[dup]
        incoming_one = no[dup]
        length = _unwind(nf, nz, no, nw, length, dup)

    ratio_hot = cover[hot] / cover[node]
    ratio_cold = cover[cold] / cover[node]
    _shap_recurse(
        np.int64(hot), feature, threshold, miss_left, left, right, value, cover,
        x, phi, nf, nz, no, nw, length, incoming_zero * ratio_hot, incoming_one, np.int64(f),
    )
    _shap_recurse(
        np.int64(cold), feature, threshold, miss_left, left, right, value, cover,
        x, phi, nf, nz, no, nw, length, incoming_zero * ratio_cold, 0.0, np.int64(f),
    )


@njit
def _forest_shap(X, roots, feature, threshold, miss_left, left, right, value, cover, out):
    empty_f = np.empty(0, dtype=np.int64)
    empty_w = np.empty(0, dtype=np.float64)
    for r in range(X.shape[0]):
        for t in range(roots.size):
            _shap_recurse(
                roots[t], feature, threshold, miss_left, left, right, value, cover,
                X[r], out[r], empty_f, empty_w, empty_w, empty_w, 0, 1.0, 1.0, np.int64(-1),
            )


def _forest_arrays(model: GbmModel):
    """Flatten trees into contiguous int64/float64 arrays for the walk."""
    if not model.trees:
        zi = np.zeros(0, dtype=np.int64)
        zf = np.zeros(0, dtype=np.float64)
        return zi, zi, zf, np.zeros(0, dtype=np.bool_), zi, zi, zf, zf
    roots = []
    offset = 0
    feats, thrs, miss, lefts, rights, vals, covers = [], [], [], [], [], [], []
    for tree in model.trees:
        roots.append(offset)
        shift = np.where(tree.left >= 0, offset, 0)
        feats.append(tree.feature.astype(np.int64))
        thrs.append(tree.threshold)
        miss.append(tree.miss_left)
        lefts.append((tree.left + shift).astype(np.int64))
        rights.append((tree.right + shift).astype(np.int64))
        vals.append(tree.value)
        covers.append(tree.cover)
        offset += tree.n_nodes
    return (
        np.asarray(roots, dtype=np.int64),
        np.concatenate(feats),
        np.concatenate(thrs),
        np.concatenate(miss),
        np.concatenate(lefts),
        np.concatenate(rights),
        np.concatenate(vals),
        np.concatenate(covers),
    )


def tree_expectation(tree: Tree) -> float:
    """Cover-weighted mean leaf value, the tree's contribution to the base."""
    total = 0.0
    stack = [0]
    root_cover = float(tree.cover[0]) if tree.n_nodes else 1.0
    while stack:
        node = stack.pop()
        if tree.left[node] < 0:
            total += float(tree.value[node]) * float(tree.cover[node]) / root_cover
        else:
            stack.append(int(tree.left[node]))
            stack.append(int(tree.right[node]))
    return total


def tree_attribution_matrix(model: GbmModel, X: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-row TreeSHAP values for a matrix; returns (base_value, (n, F) phi)."""
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if arr.shape[1] != model.n_features:
        raise ValueError(
            f"attribution: expected {model.n_features} features, got {arr.shape[1]}"
        )
    out = np.zeros((arr.shape[0], model.n_features), dtype=np.float64)
    roots, feature, threshold, miss_left, left, right, value, cover = _forest_arrays(model)
    if roots.size:
        _forest_shap(arr, roots, feature, threshold, miss_left, left, right, value, cover, out)
    out *= model.hp.learning_rate
    base = model.base_score + model.hp.learning_rate * sum(
        tree_expectation(t) for t in model.trees
    )
    return float(base), out


def tree_attribution(model: GbmModel, x: np.ndarray) -> Attribution:
    base, phi = tree_attribution_matrix(model, np.atleast_2d(x))
    return Attribution(base_value=base, values=phi[0])


def linear_attribution_matrix(
    model: LogisticModel, X: np.ndarray, background_mean: np.ndarray
) -> tuple[float, np.ndarray]:
    arr = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mean = np.asarray(background_mean, dtype=np.float64)
    if arr.shape[1] != model.weights.size or mean.size != model.weights.size:
        raise ValueError("attribution: feature width mismatch")
    phi = model.weights[None, :] * (arr - mean[None, :])
    base = float(model.weights @ mean + model.bias)
    return base, phi


def linear_attribution(
    model: LogisticModel, x: np.ndarray, background_mean: np.ndarray
) -> Attribution:
    base, phi = linear_attribution_matrix(model, np.atleast_2d(x), background_mean)
    return Attribution(base_value=base, values=phi[0])


def rank_features(ensemble, values: np.ndarray, mask: np.ndarray, top_k: int = DEFAULT_TOP_K):
    """Mean |attribution| per slot, averaged over ensemble members.

    Each member sees the rows through its own fold's preprocessor; logistic
    members use their fold's training background mean. Returns the top_k
    (slot_name, score) pairs, score-descending with slot order breaking
    ties. Families without attributions raise ValueError.
    """
    family = ensemble.family
    if family not in ("gbm", "lr"):
        raise ValueError("attributions unavailable for this family")
    per_member = []
    for member in ensemble.members:
        pre = ensemble.fold_preprocessors[member.fold]
        transformed = pre.apply(values, mask)
        if family == "gbm":
            _, phi = tree_attribution_matrix(member.model, transformed)
        else:
            background = np.asarray(ensemble.background_means[member.fold], dtype=np.float64)
            _, phi = linear_attribution_matrix(member.model, transformed, background)
        per_member.append(np.abs(phi).mean(axis=0))
    mean_abs = np.mean(per_member, axis=0)
    order = sorted(range(mean_abs.size), key=lambda j: (-mean_abs[j], j))
    return [(FEATURE_NAMES[j], float(mean_abs[j])) for j in order[:top_k]]
