"""Verification metrics with genuine as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .forest import VERDICT_GENUINE


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (e.g. single-class labels)."""


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    @property
    def fnr(self) -> float:
        d = self.tp + self.fn
        return self.fn / d if d else 0.0

    @property
    def fpr(self) -> float:
        d = self.fp + self.tn
        return self.fp / d if d else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "fnr": self.fnr, "fpr": self.fpr,
        }


def confusion(verdicts, labels) -> ConfusionCounts:
    """Tally verdicts (genuine/impostor strings) against 0/1 labels."""
    if len(verdicts) != len(labels):
        raise ValueError(f"{len(verdicts)} verdicts vs {len(labels)} labels")
    counts = ConfusionCounts()
    for verdict, label in zip(verdicts, labels):
        predicted_genuine = verdict == VERDICT_GENUINE
        actually_genuine = label == 0
        if predicted_genuine and actually_genuine:
            counts.tp += 1
        elif predicted_genuine and not actually_genuine:
            counts.fp += 1
        elif not predicted_genuine and actually_genuine:
            counts.fn += 1
        else:
            counts.tn += 1
    return counts


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve of negative-probability scores.

    Lower scores mean more genuine, so the area is the probability that a
    randomly chosen impostor outscores a randomly chosen genuine instance,
    counting ties as one half (midrank formula, identical to pair counting).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape[0] != labels.shape[0]:
        raise ValueError("scores and labels must have equal length")
    n_imp = int(np.sum(labels == 1))
    n_gen = int(np.sum(labels == 0))
    if n_imp == 0 or n_gen == 0:
        raise UndefinedMetricError("AUC needs both genuine and impostor labels")
    ranks = rankdata(scores)  # midranks handle ties exactly like pair counting
    rank_sum_imp = float(np.sum(ranks[labels == 1]))
    u = rank_sum_imp - n_imp * (n_imp + 1) / 2.0
    return u / (n_imp * n_gen)
