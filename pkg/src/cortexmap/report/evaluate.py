"""Evaluation summaries for node classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .metrics import f1_per_class, macro_f1


@dataclass
class EvalResult:
    macro_f1: float
    f1: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray  # [true, predicted] counts
    n_samples: int
    split: str = ""

    def to_json(self) -> dict:
        return {
            "split": self.split,
            "macro_f1": self.macro_f1,
            "n_samples": self.n_samples,
            "per_class": [
                {"class": c, "precision": float(self.precision[c]),
                 "recall": float(self.recall[c]), "f1": float(self.f1[c]),
                 "support": int(self.confusion[c].sum())}
                for c in range(len(self.f1))
            ],
            "confusion": self.confusion.tolist(),
        }


def evaluate_predictions(y_true: np.ndarray, y_pred: np.ndarray,
                         n_classes: Optional[int] = None,
                         split: str = "") -> EvalResult:
    """Confusion matrix, per-class precision/recall/F1, macro-F1.

    Undefined precision/recall/F1 (no predicted or no true members) score 0;
    the macro average runs over classes present in y_true.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty label set")
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    if y_true.min() < 0 or y_pred.min() < 0 or max(y_true.max(), y_pred.max()) >= n_classes:
        raise ValueError("labels outside the class range")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    pred_tot = confusion.sum(axis=0)
    true_tot = confusion.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros(n_classes), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros(n_classes), where=true_tot > 0)
    return EvalResult(
        macro_f1=macro_f1(y_true, y_pred, n_classes),
        f1=f1_per_class(y_true, y_pred, n_classes),
        precision=precision,
        recall=recall,
        confusion=confusion,
        n_samples=int(y_true.size),
        split=split,
    )
