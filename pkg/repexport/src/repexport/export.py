"""Contextual representation export.

Reads the token/label corpus format (labels are ignored), runs a pretrained
bidirectional language model over each sentence, and writes three layers of
per-token vectors in the REP1 binary layout:

    magic "REP1" | u32 sentence_count | u32 L | u32 D_c
    then per sentence: u32 T | L*T*D_c float32, layer-major

All integers and floats are little-endian. A `--random` mode writes seeded
standard-normal tensors in the same layout so downstream pipelines can be
exercised without any pretrained model.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

MAGIC = b"REP1"
NUM_LAYERS = 3


@dataclass
class ExportJob:
    corpus_path: str
    output_path: str
    model_id: str
    device: str = "cpu"
    batch_size: int = 16


class ExportError(Exception):
    pass


def read_corpus_tokens(path) -> list[list[str]]:
    """Token sequences from a corpus file; label columns are ignored."""
    sentences: list[list[str]] = []
    tokens: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                if tokens:
                    sentences.append(tokens)
                    tokens = []
                continue
            token = line.split("\t")[0]
            if not token:
                raise ExportError(f"{path}:{lineno}: empty token")
            tokens.append(token)
    if tokens:
        sentences.append(tokens)
    return sentences


def write_rep1(sentence_reps: list[np.ndarray], path) -> None:
    """Write (L, T, D_c) float32 arrays, one per sentence, as a REP1 file."""
    if not sentence_reps:
        dim = 0
    else:
        dim = sentence_reps[0].shape[2]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", len(sentence_reps), NUM_LAYERS, dim))
        for i, rep in enumerate(sentence_reps):
            if rep.ndim != 3 or rep.shape[0] != NUM_LAYERS or rep.shape[2] != dim:
                raise ExportError(
                    f"sentence {i}: expected ({NUM_LAYERS}, T, {dim}), got {rep.shape}")
            f.write(struct.pack("<I", rep.shape[1]))
            f.write(np.ascontiguousarray(rep, dtype="<f4").tobytes())


def export_random_reps(corpus_path, dim: int, seed: int, output_path) -> None:
    """Seeded standard-normal tensors in valid REP1 layout."""
    sentences = read_corpus_tokens(corpus_path)
    rng = np.random.default_rng(seed)
    reps = [rng.standard_normal((NUM_LAYERS, len(s), dim)).astype(np.float32)
            for s in sentences]
    write_rep1(reps, output_path)


def _layer_indices(n_states: int) -> list[int]:
    """Bottom, middle, top of the model's hidden-state stack."""
    if n_states < NUM_LAYERS:
        raise ExportError(
            f"model exposes {n_states} hidden states, need at least {NUM_LAYERS}")
    return [0, n_states // 2, n_states - 1]


def export_reps(job: ExportJob) -> None:
    """Run the pretrained model over the corpus and write a REP1 file.

    Subword pieces are mean-pooled back onto the input tokens, so the output
    T always equals the corpus token count. Runs in eval mode with gradients
    disabled; two exports of the same corpus are byte-identical.
    """
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model_id)
        model = AutoModel.from_pretrained(job.model_id)
    except Exception as e:
        raise ExportError(f"could not load model {job.model_id!r}: {e}") from e
    model.to(job.device)
    model.eval()

    sentences = read_corpus_tokens(job.corpus_path)
    reps: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(sentences), job.batch_size):
            chunk = sentences[start:start + job.batch_size]
            encoded = tokenizer(chunk, is_split_into_words=True, padding=True,
                                return_tensors="pt").to(job.device)
            out = model(**encoded, output_hidden_states=True)
            layers = [out.hidden_states[i] for i in _layer_indices(len(out.hidden_states))]
            stacked = torch.stack(layers, dim=1)  # B x L x pieces x D
            for b, tokens in enumerate(chunk):
                word_ids = encoded.word_ids(batch_index=b)
                pooled = _pool_words(stacked[b], word_ids, len(tokens),
                                     start + b)
                reps.append(pooled)
    write_rep1(reps, job.output_path)


def _pool_words(piece_reps, word_ids, n_tokens: int, sent_index: int) -> np.ndarray:
    """Mean-pool (L, pieces, D) subword vectors onto the original tokens."""
    arr = piece_reps.cpu().numpy()
    n_layers, _, dim = arr.shape
    sums = np.zeros((n_layers, n_tokens, dim), dtype=np.float64)
    counts = np.zeros(n_tokens, dtype=np.int64)
    for piece, word in enumerate(word_ids):
        if word is None:  # special or padding piece
            continue
        if word >= n_tokens:
            raise ExportError(
                f"sentence {sent_index}: tokenizer produced word index {word} "
                f"for a {n_tokens}-token sentence")
        sums[:, word] += arr[:, piece]
        counts[word] += 1
    if (counts == 0).any():
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ExportError(
            f"sentence {sent_index}: token {missing} has no subword pieces")
    return (sums / counts[None, :, None]).astype(np.float32)
