"""Rank-based AUC and ROC curves.

Both return NaN (the undefined marker) when only one class is present.
"""
from __future__ import annotations

import numpy as np


def midranks(x) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.r_[True, xs[1:] != xs[:-1]]
    group = np.cumsum(starts) - 1
    first = np.flatnonzero(starts)
    last = np.r_[first[1:], len(xs)] - 1
    avg = (first + last) / 2.0 + 1.0
    ranks = np.empty(len(x))
    ranks[order] = avg[group]
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score of a defaulter > score of a survivor), ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    r = midranks(scores)
    return float((r[labels].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_curve(scores, labels) -> np.ndarray:
    """ROC points ``(1 - specificity, sensitivity)`` from (0, 0) to (1, 1).

    One point per distinct score threshold (classify as default when
    ``score >= threshold``), thresholds in decreasing order.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return np.empty((0, 2))
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    lab = labels[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(~lab)
    ends = np.r_[s[1:] != s[:-1], True]
    pts = np.column_stack([fp[ends] / n0, tp[ends] / n1])
    return np.vstack([[0.0, 0.0], pts])


def trapezoid_auc(points) -> float:
    x, y = points[:, 0], points[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))
