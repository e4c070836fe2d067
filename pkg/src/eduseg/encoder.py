"""Sentence encoder: embedding + layer-mixed contextual vectors, a BiLSTM,
windowed self-attention over its states, and a fusion BiLSTM.

The batched core works on lists of per-timestep (B, D) tensors so every
matmul stays 2-D; the public single-sentence operations wrap it with B=1.
Padded positions are handled by gating LSTM state updates with the batch
mask, which makes a sentence's outputs independent of its batch placement.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Batch, EmbeddingTable, NUM_LAYERS
from .errors import ConfigError, ShapeError

ArrayLike = Union[Tensor, np.ndarray]


@dataclass
class MixWeights:
    """Learned softmax weights over the 3 contextual layers plus a scale."""
    raw: Tensor    # (3,)
    gamma: Tensor  # scalar

    def normalized(self) -> np.ndarray:
        d = self.raw.data
        e = np.exp(d - d.max())
        return e / e.sum()


@dataclass
class LSTMCell:
    """One direction's gate parameters; gate order is input, forget, cell, output."""
    W: Tensor  # (D_in, 4H)
    U: Tensor  # (H, 4H)
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]


@dataclass
class BiLSTMParams:
    fw: LSTMCell
    bw: LSTMCell

    @property
    def input_dim(self) -> int:
        return self.fw.W.shape[0]

    @property
    def hidden(self) -> int:
        return self.fw.hidden


@dataclass
class AttentionParams:
    w_attn: Tensor            # (6H, 1)
    window: Optional[int]     # None means unbounded

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise ConfigError(f"attention window must be >= 1, got {self.window}")


@dataclass
class EncoderParams:
    embedding: EmbeddingTable
    mix: Optional[MixWeights]
    lstm1: BiLSTMParams
    attn: Optional[AttentionParams]
    fusion: Optional[BiLSTMParams]
    use_elmo: bool
    use_attention: bool
    dropout: float = 0.0


def glorot(rng: np.random.Generator, shape: tuple, dtype) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_lstm_cell(rng, d_in: int, hidden: int, dtype) -> LSTMCell:
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    return LSTMCell(
        W=Tensor(glorot(rng, (d_in, 4 * hidden), dtype), requires_grad=True),
        U=Tensor(glorot(rng, (hidden, 4 * hidden), dtype), requires_grad=True),
        b=Tensor(b, requires_grad=True),
    )


def init_bilstm(rng, d_in: int, hidden: int, dtype) -> BiLSTMParams:
    return BiLSTMParams(fw=init_lstm_cell(rng, d_in, hidden, dtype),
                        bw=init_lstm_cell(rng, d_in, hidden, dtype))


def mix_contextual(reps: ArrayLike, mw: MixWeights) -> Tensor:
    """Scaled softmax-weighted sum of the 3 layer representations.

    Accepts (3, T, D_c) for one sentence or (B, 3, T, D_c) batched; the
    layer axis must be the one of size 3 in the stated position.
    """
    reps = ad.as_tensor(reps, dtype=mw.raw.dtype)
    layer_axis = 0 if reps.data.ndim == 3 else 1
    if reps.data.ndim not in (3, 4) or reps.shape[layer_axis] != NUM_LAYERS:
        raise ShapeError(f"expected {NUM_LAYERS} layers, got shape {reps.shape}")
    weights = ad.softmax(mw.raw)
    w_parts = ad.split(weights, [1, 1, 1])
    layers = ad.split(reps, [1] * NUM_LAYERS, axis=layer_axis)
    total = None
    for w_l, layer in zip(w_parts, layers):
        shp = list(layer.shape)
        shp.pop(layer_axis)
        term = ad.mul(w_l, ad.reshape(layer, shp))
        total = term if total is None else ad.add(total, term)
    return ad.mul(mw.gamma, total)


def _lstm_step(x: Tensor, h: Tensor, c: Tensor, cell: LSTMCell):
    hid = cell.hidden
    z = ad.add(ad.add(ad.matmul(x, cell.W), ad.matmul(h, cell.U)), cell.b)
    gi, gf, gg, go = ad.split(z, [hid] * 4, axis=-1)
    c_new = ad.add(ad.mul(ad.sigmoid(gf), c), ad.mul(ad.sigmoid(gi), ad.tanh(gg)))
    h_new = ad.mul(ad.sigmoid(go), ad.tanh(c_new))
    return h_new, c_new


def _lstm_direction(xs: Sequence[Tensor], cell: LSTMCell,
                    mask: Optional[np.ndarray], reverse: bool) -> list[Tensor]:
    t_len = len(xs)
    batch = xs[0].shape[0]
    dtype = xs[0].dtype
    h = Tensor(np.zeros((batch, cell.hidden), dtype=dtype))
    c = Tensor(np.zeros((batch, cell.hidden), dtype=dtype))
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    out: list[Optional[Tensor]] = [None] * t_len
    for t in order:
        h_new, c_new = _lstm_step(xs[t], h, c, cell)
        if mask is not None:
            m = Tensor(mask[:, t:t + 1].astype(dtype))
            h = ad.add(ad.mul(m, h_new), ad.mul(Tensor(1.0 - m.data), h))
            c = ad.add(ad.mul(m, c_new), ad.mul(Tensor(1.0 - m.data), c))
        else:
            h, c = h_new, c_new
        out[t] = h
    return out  # type: ignore[return-value]


def bilstm_steps(xs: Sequence[Tensor], params: BiLSTMParams,
                 mask: Optional[np.ndarray] = None) -> list[Tensor]:
    """Batched BiLSTM over per-timestep (B, D_in) inputs -> (B, 2H) outputs."""
    if xs[0].shape[1] != params.input_dim:
        raise ShapeError(
            f"BiLSTM expects input dim {params.input_dim}, got {xs[0].shape[1]}")
    fw = _lstm_direction(xs, params.fw, mask, reverse=False)
    bw = _lstm_direction(xs, params.bw, mask, reverse=True)
    return [ad.concat([f, b], axis=-1) for f, b in zip(fw, bw)]


def bilstm_encode(inputs: ArrayLike, params: BiLSTMParams) -> Tensor:
    """Single-sentence BiLSTM: (T, D_in) -> (T, 2H), zero initial states."""
    x = ad.as_tensor(inputs, dtype=params.fw.W.dtype)
    if x.data.ndim != 2:
        raise ShapeError(f"expected a (T, D_in) matrix, got {x.shape}")
    t_len = x.shape[0]
    xs = ad.split(x, [1] * t_len, axis=0)
    outs = bilstm_steps(xs, params)
    return ad.concat(outs, axis=0)


def attention_steps(hs: Sequence[Tensor], params: AttentionParams,
                    mask: Optional[np.ndarray] = None) -> list[Tensor]:
    """Batched windowed self-attention over per-timestep (B, 2H) states.

    For each query position the scores cover the window clipped to the
    sequence (self included); padded key positions are masked out of the
    softmax. Rows whose whole window is padding (padded queries) fall
    back to attending to themselves; those outputs are never read.
    """
    t_len = len(hs)
    k = params.window
    out = []
    for i in range(t_len):
        lo = 0 if k is None else max(0, i - k)
        hi = t_len - 1 if k is None else min(t_len - 1, i + k)
        js = list(range(lo, hi + 1))
        scores = []
        for j in js:
            feat = ad.concat([hs[i], hs[j], ad.mul(hs[i], hs[j])], axis=-1)
            scores.append(ad.matmul(feat, params.w_attn))
        sc = ad.concat(scores, axis=-1)
        col_mask = None
        if mask is not None:
            col_mask = mask[:, js].copy()
            dead = ~col_mask.any(axis=-1)
            col_mask[dead, i - lo] = True
        alpha = ad.softmax(sc, col_mask)
        weights = ad.split(alpha, [1] * len(js), axis=-1)
        acc = None
        for w, j in zip(weights, js):
            term = ad.mul(w, hs[j])
            acc = term if acc is None else ad.add(acc, term)
        out.append(acc)
    return out


def restricted_attention(h: ArrayLike, params: AttentionParams) -> Tensor:
    """Single-sentence attention: (T, 2H) -> (T, 2H)."""
    x = ad.as_tensor(h, dtype=params.w_attn.dtype)
    t_len = x.shape[0]
    hs = ad.split(x, [1] * t_len, axis=0)
    outs = attention_steps(hs, params)
    return ad.concat(outs, axis=0)


def attention_weights(h: np.ndarray, params: AttentionParams) -> np.ndarray:
    """T x T attention matrix for one sentence; zero outside the window."""
    t_len = h.shape[0]
    k = params.window
    w = params.w_attn.data[:, 0]
    alpha = np.zeros((t_len, t_len), dtype=np.float64)
    for i in range(t_len):
        lo = 0 if k is None else max(0, i - k)
        hi = t_len - 1 if k is None else min(t_len - 1, i + k)
        js = np.arange(lo, hi + 1)
        feats = np.concatenate(
            [np.repeat(h[i:i + 1], len(js), axis=0), h[js], h[i] * h[js]], axis=-1)
        s = feats @ w
        e = np.exp(s - s.max())
        alpha[i, js] = e / e.sum()
    return alpha


def fuse(h: ArrayLike, a: ArrayLike, params: BiLSTMParams) -> Tensor:
    """Fusion BiLSTM over [h_t, a_t] concatenations: (T, 2H) x2 -> (T, 2H)."""
    h = ad.as_tensor(h, dtype=params.fw.W.dtype)
    a = ad.as_tensor(a, dtype=params.fw.W.dtype)
    if h.shape != a.shape:
        raise ShapeError(f"state/attention shapes differ: {h.shape} vs {a.shape}")
    return bilstm_encode(ad.concat([h, a], axis=-1), params)


def encode_steps(batch: Batch, params: EncoderParams, train_mode: bool,
                 rng: Optional[np.random.Generator] = None) -> list[Tensor]:
    """Full encoder pipeline -> per-timestep (B, 2H) tensors."""
    if params.use_elmo and batch.reps is None:
        raise ConfigError("encoder configured with contextual reps but batch has none")
    dtype = params.lstm1.fw.W.dtype
    t_len = batch.max_len
    embedded = params.embedding.lookup(batch.token_ids).astype(dtype)  # B x T x D_w
    if params.use_elmo:
        mixed = mix_contextual(batch.reps, params.mix)  # B x T x D_c tensor
        mixed_t = ad.split(mixed, [1] * t_len, axis=1)
    xs = []
    for t in range(t_len):
        e_t = Tensor(embedded[:, t, :])
        if params.use_elmo:
            r_t = ad.reshape(mixed_t[t], (batch.size, mixed_t[t].shape[2]))
            x_t = ad.concat([e_t, r_t], axis=-1)
        else:
            x_t = e_t
        if train_mode and params.dropout > 0.0:
            x_t = ad.dropout(x_t, params.dropout, rng)
        xs.append(x_t)
    hs = bilstm_steps(xs, params.lstm1, batch.mask)
    if params.use_attention:
        att = attention_steps(hs, params.attn, batch.mask)
        fused_in = [ad.concat([h, a], axis=-1) for h, a in zip(hs, att)]
        hs = bilstm_steps(fused_in, params.fusion, batch.mask)
    if train_mode and params.dropout > 0.0:
        hs = [ad.dropout(h, params.dropout, rng) for h in hs]
    return hs


def encode_sentence(batch: Batch, params: EncoderParams, train_mode: bool,
                    rng: Optional[np.random.Generator] = None) -> tuple[Tensor, np.ndarray]:
    """Encode a batch to a (B, T, 2H) tensor plus the propagated mask."""
    steps = encode_steps(batch, params, train_mode, rng)
    return ad.stack(steps, axis=1), batch.mask
