"""Binary classification metrics: confusion counts, MCC, F1, accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(records, threshold: float = 0.5) -> ConfusionCounts:
    """Thresholded counts; probability == threshold classifies positive."""
    records = list(records)
    if not records:
        raise ValueError("confusion: empty prediction list")
    c = ConfusionCounts()
    for r in records:
        predicted = 1 if r.probability >= threshold else 0
        if predicted == 1:
            if r.true_label == 1:
                c.tp += 1
            else:
                c.fp += 1
        else:
            if r.true_label == 1:
                c.fn += 1
            else:
                c.tn += 1
    return c


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; any zero denominator factor yields 0."""
    denom = ((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn))
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def f1_accuracy(c: ConfusionCounts):
    """(F1 on the positive class, overall accuracy); 0 on zero denominators."""
    f1_denom = 2 * c.tp + c.fp + c.fn
    f1 = 2 * c.tp / f1_denom if f1_denom else 0.0
    acc = (c.tp + c.tn) / c.total if c.total else 0.0
    return f1, acc
