"""Evaluation metrics: confusion matrix, classification report, ROC / AUC,
and the union-grid interpolated mean ROC across folds.

Threshold semantics: a sample is predicted positive iff its score is >= the
threshold, and the candidate thresholds are exactly the distinct score
values (descending), plus a (0, 0) anchor above the maximum score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import ClassVocabulary
from .errors import ArgumentError, DegenerateDataError
from .numeric import canonical_mean


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p] = number of samples with true class t predicted as p."""

    counts: np.ndarray
    vocab: ClassVocabulary

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.vocab)
        if counts.shape != (c, c):
            raise ArgumentError(f"counts must be {c}x{c}, got {counts.shape}")
        if (counts < 0).any():
            raise ArgumentError("counts must be non-negative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def binary_counts(self, positive_class: int) -> tuple[int, int, int, int]:
        """(TP, TN, FP, FN) treating `positive_class` as positive (one-vs-rest)."""
        p = positive_class
        tp = int(self.counts[p, p])
        fn = int(self.counts[p].sum() - tp)
        fp = int(self.counts[:, p].sum() - tp)
        tn = self.n - tp - fn - fp
        return tp, tn, fp, fn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class AverageMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassificationReport:
    per_class: tuple[ClassMetrics, ...]
    accuracy: float
    macro_avg: AverageMetrics
    weighted_avg: AverageMetrics
    vocab: ClassVocabulary
    zero_division: bool  # true when any rate had a zero denominator (reported as 0)

    def to_dict(self) -> dict:
        return {
            "classes": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for name, m in zip(self.vocab.names, self.per_class)
            },
            "accuracy": self.accuracy,
            "macro_avg": {
                "precision": self.macro_avg.precision,
                "recall": self.macro_avg.recall,
                "f1": self.macro_avg.f1,
            },
            "weighted_avg": {
                "precision": self.weighted_avg.precision,
                "recall": self.weighted_avg.recall,
                "f1": self.weighted_avg.f1,
            },
            "zero_division": self.zero_division,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def confusion_matrix(
    truth: Sequence[int], predicted: Sequence[int], vocab: ClassVocabulary
) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise ArgumentError(
            f"truth and predicted must be 1-d and equally long, got {truth.shape} vs {predicted.shape}"
        )
    c = len(vocab)
    for name, arr in (("truth", truth), ("predicted", predicted)):
        if arr.size and (arr.min() < 0 or arr.max() >= c):
            raise ArgumentError(f"{name} contains class ids outside 0..{c - 1}")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(counts, vocab)


def _safe_rate(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def classification_report(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/f1 plus accuracy, macro and weighted averages.

    Zero-denominator rates are reported as 0 and flagged via `zero_division`.
    """
    counts = cm.counts
    n = cm.n
    degenerate = False
    per_class = []
    for c in range(len(cm.vocab)):
        tp = float(counts[c, c])
        fp = float(counts[:, c].sum() - tp)
        fn = float(counts[c].sum() - tp)
        precision, d1 = _safe_rate(tp, tp + fp)
        recall, d2 = _safe_rate(tp, tp + fn)
        f1, d3 = _safe_rate(2.0 * precision * recall, precision + recall)
        degenerate = degenerate or d1 or d2 or d3
        per_class.append(ClassMetrics(precision, recall, f1, int(counts[c].sum())))

    accuracy, d = _safe_rate(float(np.trace(counts)), n)
    degenerate = degenerate or d
    k = len(per_class)
    macro = AverageMetrics(
        sum(m.precision for m in per_class) / k,
        sum(m.recall for m in per_class) / k,
        sum(m.f1 for m in per_class) / k,
    )
    if n:
        weighted = AverageMetrics(
            sum(m.precision * m.support for m in per_class) / n,
            sum(m.recall * m.support for m in per_class) / n,
            sum(m.f1 * m.support for m in per_class) / n,
        )
    else:
        weighted = AverageMetrics(0.0, 0.0, 0.0)
        degenerate = True
    return ClassificationReport(tuple(per_class), accuracy, macro, weighted, cm.vocab, degenerate)


@dataclass(frozen=True)
class RocCurve:
    """(fpr, tpr) pairs ordered by ascending fpr, both coordinates non-decreasing.

    `thresholds` is present for curves computed from scores (the anchor point
    carries +inf) and absent for averaged curves.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray | None
    positive_class: int

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        if fpr.shape != tpr.shape or fpr.ndim != 1 or fpr.size < 2:
            raise ArgumentError("fpr and tpr must be equal-length 1-d arrays with >= 2 points")
        if (np.diff(fpr) < 0).any() or (np.diff(tpr) < 0).any():
            raise ArgumentError("fpr and tpr must be non-decreasing")
        if ((fpr < 0) | (fpr > 1) | (tpr < 0) | (tpr > 1)).any():
            raise ArgumentError("fpr and tpr must lie in [0, 1]")
        if fpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise ArgumentError("curve must start at fpr 0 and end at (1, 1)")
        fpr = fpr.copy()
        tpr = tpr.copy()
        fpr.setflags(write=False)
        tpr.setflags(write=False)
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)
        if self.thresholds is not None:
            thr = np.asarray(self.thresholds, dtype=np.float64).copy()
            if thr.shape != fpr.shape:
                raise ArgumentError("thresholds must match the point count")
            thr.setflags(write=False)
            object.__setattr__(self, "thresholds", thr)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(
    scores: Sequence[float], truth: Sequence[bool], positive_class: int = 1
) -> RocCurve:
    """ROC curve over the distinct score values used as thresholds.

    `truth[i]` is True when sample i belongs to the positive class, and
    `scores[i]` is its predicted positive-class probability.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise ArgumentError("scores and truth must be 1-d and equally long")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError(
            f"need at least one positive and one negative sample, got {n_pos} / {n_neg}"
        )

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truth[order]
    # index of the last occurrence of each distinct score value
    last = np.flatnonzero(np.r_[np.diff(s) != 0, True])
    tp = np.cumsum(t)[last]
    fp = (last + 1) - tp
    fpr = np.concatenate(([0.0], fp / n_neg))
    tpr = np.concatenate(([0.0], tp / n_pos))
    thresholds = np.concatenate(([np.inf], s[last]))
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:  # unreachable: the min threshold predicts all positive
        fpr = np.concatenate((fpr, [1.0]))
        tpr = np.concatenate((tpr, [1.0]))
        thresholds = np.concatenate((thresholds, [-np.inf]))
    return RocCurve(fpr, tpr, thresholds, positive_class)


def auc(curve: RocCurve) -> float:
    """Trapezoidal integral of tpr over fpr."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def _collapse_vertical(curve: RocCurve) -> tuple[np.ndarray, np.ndarray]:
    """Collapse duplicate-fpr points to the maximum tpr (tpr is sorted, so
    the last occurrence per fpr value carries the max)."""
    u, inverse = np.unique(curve.fpr, return_inverse=True)
    last = np.searchsorted(inverse, np.arange(u.size), side="right") - 1
    return u, curve.tpr[last]


def mean_roc(curves: Sequence[RocCurve]) -> RocCurve:
    """Average several ROC curves on the sorted union of their fpr values.

    Each curve first has vertical segments collapsed to their top point, then
    its tpr is linearly interpolated on the union grid; the output tpr is the
    arithmetic mean across curves.
    """
    if not curves:
        raise ArgumentError("need at least one curve")
    pos = curves[0].positive_class
    if any(c.positive_class != pos for c in curves):
        raise ArgumentError("curves disagree on the positive class")
    grid = np.unique(np.concatenate([c.fpr for c in curves]))
    interpolated = []
    for c in curves:
        xs, ys = _collapse_vertical(c)
        interpolated.append(np.interp(grid, xs, ys))
    mean_tpr = canonical_mean(np.stack(interpolated))
    # floating noise must not break the curve invariants
    mean_tpr = np.maximum.accumulate(np.clip(mean_tpr, 0.0, 1.0))
    return RocCurve(grid, mean_tpr, None, pos)


def roc_to_csv_rows(curve: RocCurve) -> list[list[str]]:
    """Rows (with header) for the `fpr,tpr,threshold` emission format."""
    rows = [["fpr", "tpr", "threshold"]]
    for i in range(curve.fpr.size):
        thr = "" if curve.thresholds is None else f"{curve.thresholds[i]:.9g}"
        rows.append([f"{curve.fpr[i]:.9g}", f"{curve.tpr[i]:.9g}", thr])
    return rows
