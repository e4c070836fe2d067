import numpy as np
import pytest

from eduseg import crf as crf_mod
from eduseg.config import TrainConfig
from eduseg.corpus import (EmbeddingTable, PAD_TOKEN, Sentence, UNK_TOKEN, Vocab,
                           make_batches)
from eduseg.model import SegmenterModel


def random_crf(rng, d_in=6, scale=1.0):
    params = crf_mod.init_crf(rng, d_in, np.float64)
    for t in (params.W, params.b, params.trans, params.start, params.end):
        t.data = rng.normal(scale=scale, size=t.data.shape)
    return params


def tiny_vocab(tokens=("a", "b", "c", "d")):
    return Vocab([PAD_TOKEN, UNK_TOKEN, *tokens])


def tiny_model(rng=None, hidden=4, emb_dim=5, rep_dim=6, use_elmo=True,
               use_attention=True, window=2, dtype=np.float64, dropout=0.0,
               seed=3):
    rng = rng if rng is not None else np.random.default_rng(seed)
    vocab = tiny_vocab()
    emb = EmbeddingTable(dim=emb_dim,
                         matrix=np.vstack([np.zeros((2, emb_dim)),
                                           rng.normal(size=(4, emb_dim))]))
    cfg = TrainConfig(hidden=hidden, window=window, use_elmo=use_elmo,
                      use_attention=use_attention, dropout=dropout, seed=seed)
    model = SegmenterModel(cfg, vocab, emb,
                           rep_dim=rep_dim if use_elmo else None,
                           dtype=dtype, rng=rng)
    return model


def random_sentences(rng, count, min_len=3, max_len=8, vocab_tokens=("a", "b", "c", "d")):
    out = []
    for _ in range(count):
        n = int(rng.integers(min_len, max_len + 1))
        tokens = [str(rng.choice(vocab_tokens)) for _ in range(n)]
        labels = [0] + [int(rng.random() < 0.3) for _ in range(n - 1)]
        out.append(Sentence(tokens, labels))
    return out


def batch_of(model, sentences, rng=None, rep_dim=None):
    reps = None
    if model.config.use_elmo:
        rep_dim = rep_dim or model.rep_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        reps = [rng.standard_normal((3, len(s), rep_dim)).astype(np.float32)
                for s in sentences]
    return make_batches(sentences, reps, len(sentences), model.vocab)[0], reps


def finite_difference(f, tensor, indices, step=1e-5):
    """Central finite differences of scalar f() w.r.t. tensor coordinates."""
    flat = tensor.data.reshape(-1)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return out


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(floor, abs(a), abs(b))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
