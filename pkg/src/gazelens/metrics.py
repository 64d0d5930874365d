"""ROC curves, AUC, and threshold classification metrics.

The ROC sweep handles tied scores by advancing true and false positives
together, which makes the trapezoidal AUC equal to the pairwise ranking
statistic P(s+ > s-) + 0.5 P(s+ = s-).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # score at which each point is reached; +inf first
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (float(f), float(t), float(th))
            for f, t, th in zip(self.fpr, self.tpr, self.thresholds)
        ]


def roc_auc(scores, labels) -> RocCurve:
    """ROC via a descending-score sweep with tie grouping, AUC by the
    trapezoidal rule. Requires both classes present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D arrays")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires both classes present")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    fpr = [0.0]
    tpr = [0.0]
    thr = [math.inf]
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        tp += int(y[i:j].sum())
        fp += (j - i) - int(y[i:j].sum())
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
        thr.append(float(s[i]))
        i = j
    fpr_a, tpr_a = np.array(fpr), np.array(tpr)
    auc = float(np.trapezoid(tpr_a, fpr_a))
    return RocCurve(fpr_a, tpr_a, np.array(thr), auc)


UNDEFINED = None  # marker for metrics that are undefined on a fold


def threshold_metrics(scores, labels, delta: float = 0.5) -> dict:
    """Accuracy, recall, precision and F1 at the decision threshold delta
    (predicted label is 1 when score >= delta). Precision and F1 are the
    undefined marker when no positives are predicted."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pred = (scores >= delta).astype(np.int64)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    out = {"accuracy": (tp + tn) / len(labels)}
    out["recall"] = tp / (tp + fn) if (tp + fn) > 0 else UNDEFINED
    out["precision"] = tp / (tp + fp) if (tp + fp) > 0 else UNDEFINED
    p, r = out["precision"], out["recall"]
    if p is UNDEFINED or r is UNDEFINED or (p + r) == 0:
        out["f1"] = UNDEFINED
    else:
        out["f1"] = 2 * p * r / (p + r)
    return out


def predict_subject_level(sentence_scores) -> float:
    """Subject score: arithmetic mean of the subject's sentence scores."""
    scores = np.asarray(sentence_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("need at least one sentence score")
    return float(scores.mean())


def summarize_folds(values: list[float | None]) -> dict:
    """Across-fold mean and standard error (sample std / sqrt(k)) of a
    per-fold metric. Undefined folds are excluded with a warning."""
    defined = [v for v in values if v is not None]
    if len(defined) < len(values):
        warnings.warn(
            f"{len(values) - len(defined)} fold(s) had an undefined metric "
            "and were excluded from averaging",
            stacklevel=2,
        )
    if not defined:
        return {"mean": None, "se": None, "n_folds": 0}
    arr = np.array(defined, dtype=np.float64)
    se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "se": se, "n_folds": len(arr)}
