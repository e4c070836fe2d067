"""Full segmenter: encoder pipeline plus CRF head, with named parameters."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import autodiff as ad
from . import crf as crf_mod
from . import encoder as enc
from .autodiff import GradGraph, Tensor
from .config import TrainConfig
from .corpus import Batch, EmbeddingTable, Vocab
from .errors import ConfigError


class SegmenterModel:
    """Holds all parameters and runs batched forward passes."""

    def __init__(self, config: TrainConfig, vocab: Vocab,
                 embedding: EmbeddingTable, rep_dim: Optional[int],
                 dtype=np.float32, rng: Optional[np.random.Generator] = None):
        if config.use_elmo and rep_dim is None:
            raise ConfigError("use_elmo requires the contextual-rep dimension")
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        hid = config.hidden
        d_in = embedding.dim + (rep_dim if config.use_elmo else 0)
        self.rep_dim = rep_dim if config.use_elmo else None
        mix = None
        if config.use_elmo:
            mix = enc.MixWeights(
                raw=Tensor(np.zeros(3, dtype=self.dtype), requires_grad=True),
                gamma=Tensor(np.asarray(1.0, dtype=self.dtype), requires_grad=True),
            )
        attn = fusion = None
        if config.use_attention:
            attn = enc.AttentionParams(
                w_attn=Tensor(enc.glorot(rng, (6 * hid, 1), self.dtype),
                              requires_grad=True),
                window=config.window,
            )
            fusion = enc.init_bilstm(rng, 4 * hid, hid, self.dtype)
        self.encoder = enc.EncoderParams(
            embedding=embedding,
            mix=mix,
            lstm1=enc.init_bilstm(rng, d_in, hid, self.dtype),
            attn=attn,
            fusion=fusion,
            use_elmo=config.use_elmo,
            use_attention=config.use_attention,
            dropout=config.dropout,
        )
        self.crf = crf_mod.init_crf(rng, 2 * hid, self.dtype)

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        e = self.encoder
        if e.mix is not None:
            params["encoder.mix.raw"] = e.mix.raw
            params["encoder.mix.gamma"] = e.mix.gamma
        for label, bilstm in (("lstm1", e.lstm1), ("fusion", e.fusion)):
            if bilstm is None:
                continue
            for direction, cell in (("fw", bilstm.fw), ("bw", bilstm.bw)):
                params[f"encoder.{label}.{direction}.W"] = cell.W
                params[f"encoder.{label}.{direction}.U"] = cell.U
                params[f"encoder.{label}.{direction}.b"] = cell.b
        if e.attn is not None:
            params["encoder.attn.w"] = e.attn.w_attn
        params["crf.W"] = self.crf.W
        params["crf.b"] = self.crf.b
        params["crf.trans"] = self.crf.trans
        params["crf.start"] = self.crf.start
        params["crf.end"] = self.crf.end
        return params

    def emission_steps(self, batch: Batch, train_mode: bool,
                       rng: Optional[np.random.Generator] = None) -> list[Tensor]:
        """Per-timestep (B, 2) emission tensors for a batch."""
        states = enc.encode_steps(batch, self.encoder, train_mode, rng)
        return [ad.add(ad.matmul(h, self.crf.W), self.crf.b) for h in states]

    def batch_loss(self, batch: Batch, train_mode: bool = True,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
        """Mean per-sentence NLL over the batch (scalar tensor)."""
        emis = self.emission_steps(batch, train_mode, rng)
        per_sentence = crf_mod.batch_nll(emis, batch.mask, batch.labels, self.crf)
        return ad.tmean(per_sentence)

    def loss_and_gradients(self, batch: Batch,
                           rng: Optional[np.random.Generator] = None
                           ) -> tuple[float, dict[str, np.ndarray]]:
        params = self.named_parameters()
        for p in params.values():
            p.zero_grad()
        with GradGraph() as graph:
            loss = self.batch_loss(batch, train_mode=True, rng=rng)
        ad.backward(loss, graph)
        grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for name, p in params.items()}
        return loss.item(), grads

    def decode(self, batch: Batch) -> list[list[int]]:
        """Viterbi label sequences, trimmed to true sentence lengths."""
        emis = self.emission_steps(batch, train_mode=False)
        scores = np.stack([e.data for e in emis], axis=1)  # B x T x 2
        out = []
        for i, n in enumerate(batch.lengths):
            labels, _ = crf_mod.viterbi(scores[i, :n], self.crf)
            out.append(labels)
        return out

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for name, arr in values.items():
            if name not in params:
                raise ConfigError(f"model has no parameter named {name!r}")
            if params[name].data.shape != arr.shape:
                raise ConfigError(
                    f"parameter {name!r}: shape {arr.shape} vs {params[name].data.shape}")
            params[name].data = arr.astype(self.dtype).reshape(params[name].data.shape)

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}
