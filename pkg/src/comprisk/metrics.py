"""Discrimination and calibration metrics with bootstrap intervals.

AUROC is the Mann-Whitney statistic computed from rank sums, counting
ties as one half. AUPRC is average precision: the sum over descending
unique score thresholds of (recall step) * precision, not a trapezoidal
interpolation. Confidence intervals are percentile bootstrap over
resampled rows; resamples missing a class are redrawn a bounded number
of times.

Calibration slope is the logit coefficient of a logistic refit of the
outcome on logit(score); calibration intercept is the constant of a
logistic refit with logit(score) as a fixed unit-coefficient offset.
Scores are clamped to [1e-6, 1 - 1e-6] before the logit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

BOOTSTRAP_DEFAULT = 1000
BOOTSTRAP_PERCENTILES = (2.5, 97.5)
BOOTSTRAP_MAX_REDRAWS = 100
SCORE_CLAMP = 1e-6
RELIABILITY_BINS = 10


def _validate(y_true, scores) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y_true, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("labels and scores must be 1-d arrays of equal length")
    if y.size == 0:
        raise ValueError("empty input")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    return y, s


def _require_both_classes(y: np.ndarray, context: str) -> None:
    if y.min() == y.max():
        raise ValueError(f"{context} requires both classes present")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(y_true: Sequence[float], scores: Sequence[float]) -> float:
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "auroc")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = _average_ranks(s)
    rank_sum = float(ranks[y == 1.0].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _threshold_counts(y: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative tp/fp after each descending unique threshold."""
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    # indices where a score group ends
    distinct = np.nonzero(np.diff(s_sorted))[0]
    ends = np.concatenate([distinct, [s_sorted.size - 1]])
    tp = np.cumsum(y_sorted)[ends]
    fp = (ends + 1) - tp
    return s_sorted[ends], tp, fp


def auprc(y_true: Sequence[float], scores: Sequence[float]) -> float:
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "auprc")
    _, tp, fp = _threshold_counts(y, s)
    n_pos = y.sum()
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def roc_points(y_true: Sequence[float], scores: Sequence[float]) -> list[tuple[float, float]]:
    """(fpr, tpr) per descending unique threshold, anchored at (0,0) and (1,1)."""
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "roc_points")
    _, tp, fp = _threshold_counts(y, s)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    points = [(0.0, 0.0)]
    points += [(float(f / n_neg), float(t / n_pos)) for f, t in zip(fp, tp)]
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def pr_points(y_true: Sequence[float], scores: Sequence[float]) -> list[tuple[float, float]]:
    """(recall, precision) per descending unique threshold, anchored at (0, 1)."""
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "pr_points")
    _, tp, fp = _threshold_counts(y, s)
    n_pos = y.sum()
    points = [(0.0, 1.0)]
    points += [(float(t / n_pos), float(t / (t + f))) for t, f in zip(tp, fp)]
    return points


@dataclass(frozen=True)
class MetricResult:
    point: float
    ci_low: float
    ci_high: float
    n_bootstrap: int

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_bootstrap": self.n_bootstrap,
        }


def bootstrap_ci(
    metric: Callable[[np.ndarray, np.ndarray], float],
    y_true: Sequence[float],
    scores: Sequence[float],
    n_bootstrap: int = BOOTSTRAP_DEFAULT,
    seed: int = 0,
) -> MetricResult:
    """Percentile bootstrap for a row-resampled metric.

    Each iteration draws its indices from an independently derived RNG, so
    results do not depend on evaluation order. Resamples with a single
    class are redrawn up to `BOOTSTRAP_MAX_REDRAWS` times; running out of
    redraws raises (the class balance is then too extreme to bootstrap).
    """
    y, s = _validate(y_true, scores)
    if n_bootstrap < 1:
        raise ValueError("n_bootstrap must be >= 1")
    point = float(metric(y, s))
    n = y.size
    stats = np.empty(n_bootstrap, dtype=np.float64)
    for i in range(n_bootstrap):
        rng = np.random.default_rng([seed, i])
        for _ in range(BOOTSTRAP_MAX_REDRAWS):
            idx = rng.integers(0, n, size=n)
            resampled = y[idx]
            if resampled.min() != resampled.max():
                break
        else:
            raise ValueError("bootstrap resampling kept drawing single-class samples")
        stats[i] = metric(resampled, s[idx])
    low, high = np.percentile(stats, BOOTSTRAP_PERCENTILES)
    return MetricResult(point=point, ci_low=float(low), ci_high=float(high), n_bootstrap=n_bootstrap)


# -- calibration ---------------------------------------------------------------


def _clamped_logit(scores: np.ndarray) -> np.ndarray:
    s = np.clip(scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    return np.log(s / (1.0 - s))


def _newton_logistic(
    y: np.ndarray, offset: np.ndarray, design: np.ndarray, max_iter: int = 100, tol: float = 1e-10
) -> np.ndarray:
    """MLE for logistic y ~ design @ beta + offset by Newton-Raphson."""
    beta = np.zeros(design.shape[1], dtype=np.float64)
    for _ in range(max_iter):
        eta = design @ beta + offset
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
        grad = design.T @ (y - p)
        if float(np.abs(grad).max()) < tol:
            break
        w = np.maximum(p * (1.0 - p), 1e-12)
        hess = design.T @ (design * w[:, None])
        beta = beta + np.linalg.solve(hess, grad)
        # Separated data pushes |beta| to infinity; cap for stability.
        beta = np.clip(beta, -50.0, 50.0)
    return beta


def calibration_slope(y_true: Sequence[float], scores: Sequence[float]) -> float:
    """Slope of logistic y ~ a + b * logit(score); ideal is 1."""
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "calibration_slope")
    l = _clamped_logit(s)
    design = np.column_stack([np.ones_like(l), l])
    beta = _newton_logistic(y, np.zeros_like(l), design)
    return float(beta[1])


def calibration_intercept(y_true: Sequence[float], scores: Sequence[float]) -> float:
    """Constant of logistic y ~ a with logit(score) as a fixed offset; ideal 0."""
    y, s = _validate(y_true, scores)
    _require_both_classes(y, "calibration_intercept")
    l = _clamped_logit(s)
    design = np.ones((y.size, 1), dtype=np.float64)
    beta = _newton_logistic(y, l, design)
    return float(beta[0])


@dataclass(frozen=True)
class ReliabilityBin:
    mean_predicted: float
    event_rate: float
    count: int

    def to_dict(self) -> dict:
        return {
            "mean_predicted": self.mean_predicted,
            "event_rate": self.event_rate,
            "count": self.count,
        }


def reliability_curve(
    y_true: Sequence[float], scores: Sequence[float], n_bins: int = RELIABILITY_BINS
) -> list[ReliabilityBin]:
    """Quantile-binned reliability points.

    Bin edges are score quantiles; duplicate edges (fewer distinct scores
    than bins) merge bins, so ties never straddle a boundary. Bin counts
    sum to n and mean predicted score is non-decreasing across bins.
    """
    y, s = _validate(y_true, scores)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = np.quantile(s, np.linspace(0.0, 1.0, n_bins + 1))
    inner = np.unique(edges[1:-1])
    assignment = np.searchsorted(inner, s, side="right")
    bins: list[ReliabilityBin] = []
    for b in range(inner.size + 1):
        in_bin = assignment == b
        if not in_bin.any():
            continue
        bins.append(
            ReliabilityBin(
                mean_predicted=float(s[in_bin].mean()),
                event_rate=float(y[in_bin].mean()),
                count=int(in_bin.sum()),
            )
        )
    return bins
