"""Binary classification metrics with the anomalous class as positive."""

import warnings

import numpy as np


def confusion(pred, labels):
    pred = np.asarray(pred, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    tn = int(np.sum(~pred & ~labels))
    return tp, fp, fn, tn


def f1_score(pred, labels) -> float:
    tp, fp, fn, _ = confusion(pred, labels)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def recall_score(pred, labels) -> float:
    tp, _, fn, _ = confusion(pred, labels)
    return tp / (tp + fn) if (tp + fn) else 0.0


def accuracy_score(pred, labels) -> float:
    tp, fp, fn, tn = confusion(pred, labels)
    total = tp + fp + fn + tn
    return (tp + tn) / total if total else 0.0


def average_precision(scores, labels):
    """Area under the precision-recall curve from ranked positive-class scores.

    Computed as sum over threshold steps of (recall gain) * precision, with
    tied scores collapsed into one step.  Returns None (with a warning) when
    the labels are single-class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        warnings.warn("average precision undefined for single-class labels")
        return None
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order].astype(np.float64)
    tp = np.cumsum(y)
    fp = np.cumsum(1.0 - y)
    # keep only the last index of each tied-score block
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - recall_prev) * precision))


def evaluate(scores, labels, threshold=0.5) -> dict:
    """All four reported metrics from anomalous-class probabilities."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(scores) != len(labels):
        raise ValueError("predictions and labels differ in length")
    pred = scores > threshold
    return {
        "f1": f1_score(pred, labels),
        "acc": accuracy_score(pred, labels),
        "ap": average_precision(scores, labels),
        "recall": recall_score(pred, labels),
    }
