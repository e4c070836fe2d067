"""Linear-chain CRF head over two labels (0 = inside, 1 = segment start).

Sequence score = start[y_1] + sum_t emissions[t][y_t]
               + sum_t trans[y_{t-1}][y_t] + end[y_T].
The log-partition runs the forward recursion in log space; decoding is
exact Viterbi with ties broken toward the lexicographically smallest
label sequence. A brute-force enumerator over all 2^T sequences serves
as the independent oracle for small T.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

NUM_LABELS = 2

ArrayLike = Union[Tensor, np.ndarray]


@dataclass
class CRFParams:
    W: Tensor      # (2H, 2) emission projection
    b: Tensor      # (2,)
    trans: Tensor  # (2, 2), trans[prev][next]
    start: Tensor  # (2,)
    end: Tensor    # (2,)


def init_crf(rng: np.random.Generator, d_in: int, dtype) -> CRFParams:
    from .encoder import glorot
    return CRFParams(
        W=Tensor(glorot(rng, (d_in, NUM_LABELS), dtype), requires_grad=True),
        b=Tensor(np.zeros(NUM_LABELS, dtype=dtype), requires_grad=True),
        trans=Tensor(np.zeros((NUM_LABELS, NUM_LABELS), dtype=dtype), requires_grad=True),
        start=Tensor(np.zeros(NUM_LABELS, dtype=dtype), requires_grad=True),
        end=Tensor(np.zeros(NUM_LABELS, dtype=dtype), requires_grad=True),
    )


def emission_scores(states: ArrayLike, params: CRFParams) -> Tensor:
    """Per-position label scores: (T, 2H) -> (T, 2)."""
    h = ad.as_tensor(states, dtype=params.W.dtype)
    if h.data.ndim != 2 or h.shape[1] != params.W.shape[0]:
        raise ShapeError(
            f"emission projection expects (T, {params.W.shape[0]}), got {h.shape}")
    return ad.add(ad.matmul(h, params.W), params.b)


def log_partition(scores: ArrayLike, params: CRFParams) -> Tensor:
    """log sum over all label sequences of exp(sequence score)."""
    emis = ad.as_tensor(scores, dtype=params.trans.dtype)
    t_len = emis.shape[0]
    rows = ad.split(emis, [1] * t_len, axis=0)
    alpha = ad.add(ad.reshape(rows[0], (NUM_LABELS,)), params.start)
    for t in range(1, t_len):
        lattice = ad.add(ad.reshape(alpha, (NUM_LABELS, 1)), params.trans)
        alpha = ad.add(ad.logsumexp(lattice, axis=0),
                       ad.reshape(rows[t], (NUM_LABELS,)))
    return ad.logsumexp(ad.add(alpha, params.end), axis=0)


def score_sequence(scores: ArrayLike, params: CRFParams, labels: Sequence[int]) -> Tensor:
    """Differentiable score of one label sequence (one-hot gathers)."""
    emis = ad.as_tensor(scores, dtype=params.trans.dtype)
    t_len = emis.shape[0]
    labels = list(labels)
    if len(labels) != t_len:
        raise ContractError(f"{len(labels)} labels for {t_len} positions")
    if any(y not in range(NUM_LABELS) for y in labels):
        raise ContractError(f"labels must be in 0..{NUM_LABELS - 1}, got {labels}")
    dtype = emis.dtype
    oh = np.zeros((t_len, NUM_LABELS), dtype=dtype)
    oh[np.arange(t_len), labels] = 1.0
    total = ad.tsum(ad.mul(emis, Tensor(oh)))
    first = np.zeros(NUM_LABELS, dtype=dtype)
    first[labels[0]] = 1.0
    total = ad.add(total, ad.tsum(ad.mul(params.start, Tensor(first))))
    last = np.zeros(NUM_LABELS, dtype=dtype)
    last[labels[-1]] = 1.0
    total = ad.add(total, ad.tsum(ad.mul(params.end, Tensor(last))))
    if t_len > 1:
        pair = np.zeros((NUM_LABELS, NUM_LABELS), dtype=dtype)
        for prev, nxt in zip(labels, labels[1:]):
            pair[prev, nxt] += 1.0
        total = ad.add(total, ad.tsum(ad.mul(params.trans, Tensor(pair))))
    return total


def nll(scores: ArrayLike, params: CRFParams, gold: Sequence[int]) -> Tensor:
    """Negative log-likelihood of the gold sequence; always >= 0."""
    return ad.sub(log_partition(scores, params), score_sequence(scores, params, gold))


def viterbi(scores: ArrayLike, params: CRFParams) -> tuple[list[int], float]:
    """Exact argmax sequence; ties resolve to the lexicographically
    smallest sequence (label 0 preferred at the earliest difference)."""
    emis = np.asarray(scores.data if isinstance(scores, Tensor) else scores,
                      dtype=np.float64)
    trans = params.trans.data.astype(np.float64)
    start = params.start.data.astype(np.float64)
    end = params.end.data.astype(np.float64)
    t_len = emis.shape[0]
    # best achievable suffix score given label y at position t
    beta = np.zeros((t_len, NUM_LABELS))
    beta[t_len - 1] = end
    for t in range(t_len - 2, -1, -1):
        cont = trans + emis[t + 1][None, :] + beta[t + 1][None, :]
        beta[t] = cont.max(axis=1)
    labels = []
    first_tot = start + emis[0] + beta[0]
    y = int(np.argmax(first_tot))  # argmax returns the first (smallest) label on ties
    labels.append(y)
    for t in range(1, t_len):
        cont = trans[y] + emis[t] + beta[t]
        y = int(np.argmax(cont))
        labels.append(y)
    score = start[labels[0]] + emis[0][labels[0]] + end[labels[-1]]
    for t in range(1, t_len):
        score += trans[labels[t - 1], labels[t]] + emis[t][labels[t]]
    return labels, float(score)


def brute_force_distribution(scores: ArrayLike, params: CRFParams
                             ) -> dict[tuple[int, ...], float]:
    """Exact distribution over all label sequences by direct enumeration."""
    emis = np.asarray(scores.data if isinstance(scores, Tensor) else scores,
                      dtype=np.float64)
    t_len = emis.shape[0]
    if t_len > 16:
        raise ContractError(f"brute force is guarded to T <= 16, got {t_len}")
    trans = params.trans.data.astype(np.float64)
    start = params.start.data.astype(np.float64)
    end = params.end.data.astype(np.float64)
    seqs = list(product(range(NUM_LABELS), repeat=t_len))
    raw = np.empty(len(seqs))
    for i, y in enumerate(seqs):
        s = start[y[0]] + end[y[-1]] + emis[np.arange(t_len), y].sum()
        for t in range(1, t_len):
            s += trans[y[t - 1], y[t]]
        raw[i] = s
    m = raw.max()
    p = np.exp(raw - m)
    p /= p.sum()
    return {y: float(pi) for y, pi in zip(seqs, p)}


def batch_nll(emis_steps: Sequence[Tensor], mask: np.ndarray,
              labels: np.ndarray, params: CRFParams) -> Tensor:
    """Per-sentence NLL vector (B,) over a padded batch.

    emis_steps holds per-timestep (B, 2) emission tensors; padded steps
    are frozen out of the recursion by the mask so each sentence's value
    equals its unpadded nll().
    """
    dtype = params.trans.dtype
    batch = emis_steps[0].shape[0]
    t_len = len(emis_steps)
    if np.any(labels[~mask] != 0):
        raise ContractError("padded positions must carry label 0")
    # forward recursion for log Z
    alpha = ad.add(emis_steps[0], ad.reshape(params.start, (1, NUM_LABELS)))
    for t in range(1, t_len):
        lattice = ad.add(ad.reshape(alpha, (batch, NUM_LABELS, 1)),
                         ad.reshape(params.trans, (1, NUM_LABELS, NUM_LABELS)))
        new = ad.add(ad.logsumexp(lattice, axis=1), emis_steps[t])
        m = Tensor(mask[:, t:t + 1].astype(dtype))
        alpha = ad.add(ad.mul(m, new), ad.mul(Tensor(1.0 - m.data), alpha))
    log_z = ad.logsumexp(ad.add(alpha, ad.reshape(params.end, (1, NUM_LABELS))), axis=1)
    # gold path score
    lengths = mask.sum(axis=1)
    oh_first = np.zeros((batch, NUM_LABELS), dtype=dtype)
    oh_first[np.arange(batch), labels[:, 0]] = 1.0
    gold = ad.tsum(ad.mul(ad.reshape(params.start, (1, NUM_LABELS)), Tensor(oh_first)),
                   axis=1)
    oh_last = np.zeros((batch, NUM_LABELS), dtype=dtype)
    last_pos = lengths - 1
    oh_last[np.arange(batch), labels[np.arange(batch), last_pos]] = 1.0
    gold = ad.add(gold, ad.tsum(
        ad.mul(ad.reshape(params.end, (1, NUM_LABELS)), Tensor(oh_last)), axis=1))
    for t in range(t_len):
        oh = np.zeros((batch, NUM_LABELS), dtype=dtype)
        valid = mask[:, t]
        oh[valid, labels[valid, t]] = 1.0
        gold = ad.add(gold, ad.tsum(ad.mul(emis_steps[t], Tensor(oh)), axis=1))
        if t > 0:
            pair = np.zeros((batch, NUM_LABELS, NUM_LABELS), dtype=dtype)
            both = mask[:, t]  # mask is contiguous, so t valid implies t-1 valid
            pair[both, labels[both, t - 1], labels[both, t]] = 1.0
            gold = ad.add(gold, ad.tsum(
                ad.mul(ad.reshape(params.trans, (1, NUM_LABELS, NUM_LABELS)),
                       Tensor(pair)), axis=(1, 2)))
    return ad.sub(log_z, gold)
