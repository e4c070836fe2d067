"""Seeded synthetic corpora and fixture files for tests and quickstarts.

Two tasks:
  * rule corpus: a token starts a new segment iff it is one of a fixed
    connective set. Local evidence only; any competent tagger should
    saturate on it.
  * long-range corpus: position i starts a segment iff the token 4
    positions to the left is the trigger word. The current token carries
    no evidence, so the model must move information sideways.
"""
from __future__ import annotations

import numpy as np

from .corpus import Sentence, write_contextual_reps

CONNECTIVES = ("because", "which", "when")
TRIGGER = "trigger"
LAG = 4


def _fillers(n: int) -> list[str]:
    return [f"w{i:02d}" for i in range(n)]


def generate_rule_corpus(n_sentences: int, seed: int, min_len: int = 6,
                         max_len: int = 15, n_fillers: int = 20) -> list[Sentence]:
    rng = np.random.default_rng(seed)
    fillers = _fillers(n_fillers)
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        tokens = [str(rng.choice(fillers)) for _ in range(n)]
        n_bounds = int(rng.integers(1, min(4, n)))
        positions = rng.choice(np.arange(1, n), size=n_bounds, replace=False)
        for pos in positions:
            tokens[pos] = str(rng.choice(CONNECTIVES))
        labels = [1 if t in CONNECTIVES else 0 for t in tokens]
        labels[0] = 0
        if tokens[0] in CONNECTIVES:  # keep the labeling rule exact at position 0
            tokens[0] = fillers[0]
        sentences.append(Sentence(tokens, labels))
    return sentences


def generate_longrange_corpus(n_sentences: int, seed: int, min_len: int = 10,
                              max_len: int = 16, n_fillers: int = 20) -> list[Sentence]:
    rng = np.random.default_rng(seed)
    fillers = _fillers(n_fillers)
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        tokens = [str(rng.choice(fillers)) for _ in range(n)]
        n_triggers = int(rng.integers(1, 3))
        spots = rng.choice(np.arange(0, n - LAG), size=min(n_triggers, n - LAG),
                           replace=False)
        for pos in spots:
            tokens[pos] = TRIGGER
        labels = [0] * n
        for i in range(LAG, n):
            if tokens[i - LAG] == TRIGGER:
                labels[i] = 1
        sentences.append(Sentence(tokens, labels))
    return sentences


def write_embedding_file(tokens: list[str], dim: int, seed: int, path) -> None:
    """Random fixed word vectors in the plain-text format."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as f:
        for tok in tokens:
            vec = rng.normal(scale=0.5, size=dim)
            f.write(tok + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def random_reps(sentences: list[Sentence], d_c: int, seed: int) -> list[np.ndarray]:
    """Seeded standard-normal contextual reps, 3 layers per sentence."""
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((3, len(s), d_c)).astype(np.float32)
            for s in sentences]


def write_random_reps(sentences: list[Sentence], d_c: int, seed: int, path) -> None:
    write_contextual_reps(random_reps(sentences, d_c, seed), path)
