"""Evaluation metrics. ROC AUC uses the rank-statistic form with average
ranks for ties, matching leaderboard-style scoring exactly."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROB_FLOOR = 1e-7


class SingleClassError(ValueError):
    """AUC is undefined when only one label class is present."""


def _tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank block."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """AUC = Pr(score+ > score-) + 0.5 * Pr(tie), via the rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != len(labels):
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("both classes must be present for AUC")
    ranks = _tied_ranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def logloss(scores, labels) -> float:
    p = np.clip(np.asarray(scores, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    predicted = np.asarray(scores) >= threshold
    return float((predicted == (np.asarray(labels) == 1)).mean())


@dataclass(frozen=True, slots=True)
class EvalReport:
    auc: float
    accuracy: float
    logloss: float
    n_positive: int
    n_negative: int

    def lines(self) -> list[str]:
        return [
            f"auc = {self.auc:.6f}",
            f"accuracy = {self.accuracy:.6f}",
            f"logloss = {self.logloss:.6f}",
            f"n_positive = {self.n_positive}",
            f"n_negative = {self.n_negative}",
        ]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")


def evaluate(scores, labels) -> EvalReport:
    labels = np.asarray(labels)
    return EvalReport(
        auc=roc_auc(scores, labels),
        accuracy=accuracy(scores, labels),
        logloss=logloss(scores, labels),
        n_positive=int((labels == 1).sum()),
        n_negative=int((labels == 0).sum()),
    )
