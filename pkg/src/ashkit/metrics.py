"""Threshold-free detection metrics, plus ID accuracy and histogram IoU.

Orientation is fixed package-wide: ID is the positive class and higher
scores mean "more ID". This matters for AUPR in particular, where swapping
the positive class changes the value materially.

The fast paths here are rank/scan based (O(N log N)); the test suite holds
brute-force pairwise/threshold-scan oracles that they must match to 1e-9,
ties included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .scoring import ScoreSet

CSV_COLUMNS = ("method", "p", "score", "auroc", "aupr", "fpr95", "id_acc", "iou")


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    aupr: float
    fpr95: float
    id_accuracy: float | None = None
    iou: float | None = None
    n_id: int = 0
    n_ood: int = 0

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "aupr": self.aupr,
            "fpr95": self.fpr95,
            "id_accuracy": self.id_accuracy,
            "iou": self.iou,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }


def _sides(s: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    id_scores = np.asarray(s.id_scores, dtype=np.float64)
    ood_scores = np.asarray(s.ood_scores, dtype=np.float64)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise DataError("empty side: both ID and OOD scores are required")
    return id_scores, ood_scores


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
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


def auroc(s: ScoreSet) -> float:
    """Probability that a random ID score outranks a random OOD score.

    Equals the Mann-Whitney statistic: ties count 1/2. Computed from
    average ranks rather than the O(N^2) pairwise sum.
    """
    id_scores, ood_scores = _sides(s)
    n_id, n_ood = id_scores.size, ood_scores.size
    ranks = _average_ranks(np.concatenate([id_scores, ood_scores]))
    u = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * n_ood))


def fpr_at_tpr(s: ScoreSet, tpr_target: float = 0.95) -> float:
    """False positive rate at the largest threshold keeping TPR >= target.

    Rule: a sample is called positive (ID) iff score >= tau. The largest
    feasible tau is the m-th largest ID score with m = ceil(target * n_id),
    which gives the most conservative FPR under the constraint.
    """
    if not 0.0 < tpr_target <= 1.0:
        raise ConfigError(f"bad tpr_target {tpr_target}: must be in (0, 1]")
    id_scores, ood_scores = _sides(s)
    m = math.ceil(tpr_target * id_scores.size)
    tau = float(np.partition(id_scores, id_scores.size - m)[id_scores.size - m])
    return float(np.mean(ood_scores >= tau))


def aupr(s: ScoreSet) -> float:
    """Average precision with ID as the positive class.

    Step-wise sum over unique thresholds descending, AP = sum (R_i - R_{i-1})
    * P_i; no linear interpolation, which would overestimate the area.
    """
    id_scores, ood_scores = _sides(s)
    thresholds = np.unique(np.concatenate([id_scores, ood_scores]))[::-1]
    id_sorted = np.sort(id_scores)
    ood_sorted = np.sort(ood_scores)
    tp = id_scores.size - np.searchsorted(id_sorted, thresholds, side="left")
    fp = ood_scores.size - np.searchsorted(ood_sorted, thresholds, side="left")
    precision = tp / (tp + fp)
    recall = tp / id_scores.size
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev) * precision).sum())


def hist_iou(s: ScoreSet, bins: int = 50) -> float:
    """Intersection-over-union of the two score histograms.

    Both sides are binned over the joint [min, max] range into equal-width
    right-closed bins and normalized to unit mass; IoU is the ratio of the
    binwise min-sum to max-sum. Lower means better separation. A fully
    degenerate range (every score identical) returns 1 by convention.
    """
    if bins < 1:
        raise ConfigError(f"bad bins {bins}: must be >= 1")
    id_scores, ood_scores = _sides(s)
    pooled = np.concatenate([id_scores, ood_scores])
    lo, hi = pooled.min(), pooled.max()
    if lo == hi:
        return 1.0
    width = (hi - lo) / bins
    h1 = _mass_histogram(id_scores, lo, width, bins)
    h2 = _mass_histogram(ood_scores, lo, width, bins)
    return float(np.minimum(h1, h2).sum() / np.maximum(h1, h2).sum())


def _mass_histogram(values: np.ndarray, lo: float, width: float, bins: int) -> np.ndarray:
    # Right-closed bins: (lo+(i)w, lo+(i+1)w], first bin closed on both ends.
    idx = np.clip(np.ceil((values - lo) / width).astype(int) - 1, 0, bins - 1)
    return np.bincount(idx, minlength=bins) / values.size


def id_accuracy(predictions, labels) -> float:
    """Fraction of exact matches between predicted and true labels."""
    preds = np.asarray(predictions)
    truth = np.asarray(labels)
    if preds.size != truth.size:
        raise DataError(f"length mismatch: {preds.size} predictions vs {truth.size} labels")
    if preds.size == 0:
        raise DataError("empty input")
    return float(np.mean(preds == truth))


def evaluate(
    s: ScoreSet,
    predictions=None,
    labels=None,
    bins: int = 50,
    tpr_target: float = 0.95,
) -> MetricReport:
    """All detection metrics at once, plus ID accuracy when labels are given."""
    acc = None
    if predictions is not None and labels is not None:
        acc = id_accuracy(predictions, labels)
    return MetricReport(
        auroc=auroc(s),
        aupr=aupr(s),
        fpr95=fpr_at_tpr(s, tpr_target),
        id_accuracy=acc,
        iou=hist_iou(s, bins),
        n_id=len(s.id_scores),
        n_ood=len(s.ood_scores),
    )


def csv_row(method: str, p: float, score: str, report: MetricReport) -> list:
    """One RFC-4180 row in the fixed column order (see CSV_COLUMNS)."""
    return [
        method,
        p,
        score,
        report.auroc,
        report.aupr,
        report.fpr95,
        "" if report.id_accuracy is None else report.id_accuracy,
        "" if report.iou is None else report.iou,
    ]
