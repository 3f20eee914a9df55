"""Classification metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def confusion_matrix(true, pred, K: int) -> np.ndarray:
    """``C[i, j]`` counts items with true label ``i`` predicted as ``j``."""
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return np.bincount(true * K + pred, minlength=K * K).reshape(K, K)


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros_like(a)
    np.divide(a, b, out=out, where=b > 0)
    return out


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_lines(self) -> list[str]:
        lines = [f"accuracy = {self.accuracy!r}", f"macro_f1 = {self.macro_f1!r}", f"n = {self.total}"]
        for i in range(self.f1.size):
            lines.append(f"precision.{i + 1} = {float(self.precision[i])!r}")
            lines.append(f"recall.{i + 1} = {float(self.recall[i])!r}")
            lines.append(f"f1.{i + 1} = {float(self.f1[i])!r}")
        return lines


def evaluate(true, pred, K: int) -> MetricsReport:
    """Accuracy, per-class scores and the unweighted mean F1 over all K labels.

    Labels absent from both truth and prediction contribute an F1 of 0.
    """
    C = confusion_matrix(true, pred, K)
    tp = np.diag(C).astype(np.float64)
    precision = _safe_div(tp, C.sum(axis=0))
    recall = _safe_div(tp, C.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = C.sum()
    acc = float(tp.sum() / total) if total else 0.0
    return MetricsReport(acc, float(f1.mean()), precision, recall, f1, C)


def accuracy(true, pred, K: int | None = None) -> float:
    true = np.asarray(true)
    return float(np.mean(true == np.asarray(pred))) if true.size else 0.0


def macro_f1(true, pred, K: int) -> float:
    return evaluate(true, pred, K).macro_f1


METRICS = {"macro_f1": macro_f1, "accuracy": accuracy}
