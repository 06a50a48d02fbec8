"""Class-imbalance-aware evaluation: average precision, seed aggregation, deltas.

Average precision uses the step-wise definition: walking the ranking in
descending score order, each positive contributes the precision at its rank.
Samples with tied scores are treated as one block and every positive in the
block contributes the precision measured at the end of the block, so a
constant-score predictor scores exactly the positive ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value (e.g. AUPRC with no positives)."""


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve (average precision).

    Invariant under strictly monotone transforms of the scores. Requires at
    least one positive label; never returns NaN.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC undefined: no positive labels")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    # last index of each equal-score block
    ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    ends = np.append(ends, len(sorted_scores) - 1)
    cum_tp = np.cumsum(sorted_labels)
    tp_at_end = cum_tp[ends]
    seen_at_end = ends + 1
    block_tp = np.diff(np.concatenate([[0], tp_at_end]))
    # weights divided first so the all-tied case yields the ratio exactly
    return float(np.sum((block_tp / n_pos) * (tp_at_end / seen_at_end)))


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Debug-only helper; not an evaluation metric in this toolkit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    return float(((scores >= threshold).astype(np.int64) == labels).mean())


@dataclass(frozen=True)
class SeedAggregate:
    mean: float
    std: float
    n: int

    def fmt(self, digits: int = 3) -> str:
        return f"{self.mean:.{digits}f}±{self.std:.{digits}f}"


def aggregate(values) -> SeedAggregate:
    """Mean and sample standard deviation (n-1 denominator) over seeds."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty value set")
    if arr.size < 2:
        raise ValueError("need at least 2 values for a sample standard deviation")
    return SeedAggregate(float(arr.mean()), float(arr.std(ddof=1)), int(arr.size))


def delta_table(
    method_results: dict[str, SeedAggregate],
    baseline_results: dict[str, SeedAggregate],
) -> dict[str, dict[str, float]]:
    """Per-domain difference of means against the no-adaptation baseline."""
    if set(method_results) != set(baseline_results):
        raise ValueError("method and baseline cover different domains")
    out: dict[str, dict[str, float]] = {}
    for domain in sorted(method_results):
        m = method_results[domain]
        b = baseline_results[domain]
        if m.n != b.n:
            raise ValueError(f"seed count mismatch for domain {domain}")
        out[domain] = {
            "method_mean": m.mean,
            "baseline_mean": b.mean,
            "delta": m.mean - b.mean,
        }
    return out
