"""Boundary precision/recall/F1, micro-averaged over a corpus.

Only intra-sentential boundary positions count; position 0 is excluded
from predictions before scoring (gold can never contain it). Degenerate
cases follow the usual information-extraction convention: a metric whose
own error count is zero scores 1.0, and F1 is 0 when P + R is 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Sentence, make_batches


@dataclass
class SegMetrics:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        if p + r == 0:
            return 0.0
        return 2 * p * r / (p + r)

    def to_dict(self) -> dict:
        return {
            "precision": round(self.precision, 4),
            "recall": round(self.recall, 4),
            "f1": round(self.f1, 4),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }

    def __add__(self, other: "SegMetrics") -> "SegMetrics":
        return SegMetrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def extract_boundaries(labels: Sequence[int], is_prediction: bool = False) -> set[int]:
    """Positions labeled 1; predictions drop position 0 before scoring."""
    positions = {t for t, l in enumerate(labels) if l == 1}
    if is_prediction:
        positions.discard(0)
    return positions


def prf1(gold: set[int], pred: set[int]) -> SegMetrics:
    return SegMetrics(tp=len(gold & pred), fp=len(pred - gold), fn=len(gold - pred))


def score_pairs(pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> SegMetrics:
    """Pool per-sentence counts over (gold_labels, predicted_labels) pairs."""
    total = SegMetrics(0, 0, 0)
    for gold_labels, pred_labels in pairs:
        total = total + prf1(extract_boundaries(gold_labels),
                             extract_boundaries(pred_labels, is_prediction=True))
    return total


def evaluate_corpus(model, sentences: list[Sentence],
                    reps: Optional[list[np.ndarray]],
                    batch_size: int = 32) -> SegMetrics:
    """Viterbi-decode every sentence and micro-average boundary counts."""
    preds = predict_corpus(model, sentences, reps, batch_size)
    return score_pairs((s.labels, p) for s, p in zip(sentences, preds))


def predict_corpus(model, sentences: list[Sentence],
                   reps: Optional[list[np.ndarray]],
                   batch_size: int = 32, workers: int = 1) -> list[list[int]]:
    """Predicted label sequences in corpus order."""
    batches = make_batches(sentences, reps, batch_size, model.vocab)
    if workers <= 1:
        preds: list[list[int]] = []
        for batch in batches:
            preds.extend(model.decode(batch))
        return preds
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(model.decode, batches))
    return [labels for group in results for labels in group]
