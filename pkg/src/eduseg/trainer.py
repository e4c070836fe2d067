"""Training loop: Adam with L2, global-norm gradient clipping, parameter
EMA, and validation-based early stopping.

Validation runs with the EMA shadow weights (the weights also kept in
the selected checkpoint); raw weights continue training. With a fixed
seed the whole loop is deterministic in a single-worker setup.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig
from .corpus import EmbeddingTable, Sentence, Vocab, make_batches
from .errors import ContractError, TrainingDiverged
from .evaluator import evaluate_corpus
from .model import SegmenterModel
from .persistence import Checkpoint

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Per-parameter Adam moment accumulators."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class EMAState:
    """Shadow copy of every trainable parameter."""
    decay: float
    shadow: dict[str, np.ndarray] = field(default_factory=dict)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients by max_norm/||g|| when the global norm exceeds it."""
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    total = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64)))
                        for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return dict(grads)
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: OptimizerState, lr: float, l2_weight: float = 0.0
              ) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; classic L2 is folded into the gradient.

    Returns the updated parameter map; moments and the step counter are
    updated in place on `state`.
    """
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        if l2_weight:
            g = g + l2_weight * p.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * np.square(g)
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        out[name] = (p.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                     ).astype(p.dtype)
    return out


def ema_update(ema: EMAState, params: dict[str, np.ndarray]) -> EMAState:
    """shadow <- decay * shadow + (1 - decay) * param, elementwise."""
    for name, p in params.items():
        s = ema.shadow.get(name)
        if s is None:
            ema.shadow[name] = p.astype(np.float64).copy()
        else:
            ema.shadow[name] = ema.decay * s + (1.0 - ema.decay) * p.astype(np.float64)
    return ema


@dataclass
class EpochMetrics:
    epoch: int
    train_nll: float
    val_p: float
    val_r: float
    val_f1: float
    seconds: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_nll": self.train_nll,
                "val_p": self.val_p, "val_r": self.val_r,
                "val_f1": self.val_f1, "seconds": self.seconds}


def train(config: TrainConfig, train_sents: list[Sentence],
          val_sents: list[Sentence], vocab: Vocab, embedding: EmbeddingTable,
          train_reps: Optional[list[np.ndarray]] = None,
          val_reps: Optional[list[np.ndarray]] = None,
          log_path=None) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Train to convergence and return the best checkpoint plus the log.

    Model selection keeps the epoch with the highest validation F1 under
    EMA weights (ties go to the earlier epoch); training stops after
    `patience` epochs without improvement. With no validation sentences
    the final epoch wins and early stopping is disabled.
    """
    if not train_sents:
        raise ContractError("training set is empty")
    rep_dim = train_reps[0].shape[2] if (config.use_elmo and train_reps) else None
    rng = np.random.default_rng(config.seed)
    model = SegmenterModel(config, vocab, embedding, rep_dim, rng=rng)
    opt = OptimizerState()
    ema = EMAState(decay=config.ema_decay)
    ema_update(ema, model.parameter_arrays())
    history: list[EpochMetrics] = []
    best: Optional[Checkpoint] = None
    best_f1 = -1.0
    epochs_since_best = 0
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            started = time.perf_counter()
            batches = make_batches(train_sents, train_reps, config.batch_size,
                                   vocab, shuffle_seed=config.seed * 100003 + epoch)
            losses = []
            for batch_idx, batch in enumerate(batches):
                loss, grads = model.loss_and_gradients(batch, rng=rng)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, batch_idx, loss)
                grads = clip_gradients(grads, config.clip_norm)
                updated = adam_step(model.parameter_arrays(), grads, opt,
                                    config.learning_rate, config.l2_weight)
                model.set_parameters(updated)
                # warm up the averaging horizon so early shadows track the
                # trajectory instead of the random initialization
                ema.decay = min(config.ema_decay, (1.0 + opt.step) / (10.0 + opt.step))
                ema_update(ema, updated)
                losses.append(loss)
            ckpt = _snapshot(model, config, vocab, embedding, rep_dim, ema, epoch)
            if val_sents:
                from .persistence import build_model
                metrics = evaluate_corpus(build_model(ckpt), val_sents, val_reps,
                                          config.batch_size)
                val_p, val_r, val_f1 = metrics.precision, metrics.recall, metrics.f1
            else:
                val_p = val_r = val_f1 = float("nan")
            record = EpochMetrics(epoch, float(np.mean(losses)), val_p, val_r,
                                  val_f1, time.perf_counter() - started)
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record.to_dict()) + "\n")
                log_file.flush()
            if val_sents:
                if val_f1 > best_f1:
                    best_f1 = val_f1
                    best = ckpt
                    epochs_since_best = 0
                else:
                    epochs_since_best += 1
                    if epochs_since_best >= config.patience:
                        break
            else:
                best = ckpt
    finally:
        if log_file:
            log_file.close()
    assert best is not None
    return best, history


def _snapshot(model: SegmenterModel, config, vocab, embedding, rep_dim,
              ema: EMAState, epoch: int) -> Checkpoint:
    dtype = model.dtype
    return Checkpoint(
        config=config,
        vocab=vocab,
        params=model.parameter_arrays(),
        ema={name: s.astype(dtype) for name, s in ema.shadow.items()},
        embedding=embedding,
        rep_dim=rep_dim,
        extra={"epoch": epoch},
    )
