"""Classification metrics."""

from __future__ import annotations

import numpy as np


def f1_per_class(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int):
    """Per-class F1 scores; a class with no true or predicted members
    (undefined precision/recall) scores 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    scores = np.zeros(n_classes)
    for c in range(n_classes):
        tp = np.count_nonzero((y_true == c) & (y_pred == c))
        fp = np.count_nonzero((y_true != c) & (y_pred == c))
        fn = np.count_nonzero((y_true == c) & (y_pred != c))
        denom = 2 * tp + fp + fn
        scores[c] = 2 * tp / denom if denom else 0.0
    return scores


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray,
             n_classes: int = None) -> float:
    """Unweighted mean of per-class F1 over the classes present in y_true."""
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise ValueError("macro_f1 of an empty label set")
    present = np.unique(y_true)
    if n_classes is None:
        n_classes = int(present.max()) + 1
    scores = f1_per_class(y_true, y_pred, n_classes)
    return float(scores[present].mean())
