"""Classification metrics."""

from __future__ import annotations

import numpy as np

AP_CONVENTION = "all-points interpolation, sum_k (R_k - R_{k-1}) P_k"
TIE_CONVENTION = "equal scores keep input order (stable sort)"


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.size == 0:
        raise ValueError("empty input")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels are not aligned")
    return float(np.mean(predictions == labels))


def average_precision(scores, positive) -> float:
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    if scores.size == 0:
        raise ValueError("empty input")
    order = np.argsort(-scores, kind="stable")
    hits = positive[order]
    total = hits.sum()
    if total == 0:
        return float("nan")
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, hits.size + 1)
    return float(np.sum(precision[hits]) / total)


def mean_ap(scores, labels, classes=None) -> tuple[float, list]:
    """Unweighted mean of per-class AP (classes without test positives are
    skipped).  ``scores`` is n x K, column k scoring ``classes[k]``."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.asarray(labels)
    if scores.shape[0] == 0 or scores.shape[0] != labels.shape[0]:
        raise ValueError("scores and labels must be non-empty and aligned")
    if classes is None:
        classes = np.arange(scores.shape[1])
    aps = [average_precision(scores[:, k], labels == c) for k, c in enumerate(classes)]
    valid = [a for a in aps if not np.isnan(a)]
    if not valid:
        raise ValueError("no class has a positive example")
    return float(np.mean(valid)), aps
