"""Corpus, embedding and contextual-representation loading plus batching.

File formats:
  * corpus: UTF-8 text, one "token<TAB>label" per line, blank line between
    sentences, final newline required.
  * embeddings: plain-text word vectors, "token v1 v2 ... vD" per line.
  * REP1: little-endian binary of per-sentence layer representations;
    magic "REP1", u32 sentence_count, u32 L, u32 D_c, then per sentence
    u32 T followed by L*T*D_c float32 values (layer, then token, then dim).
    A JSON-lines debug variant holds {"layers": [[[...]]]} per sentence.
"""
from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AlignmentError, FormatError, ParseError, ValidationError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

REP_MAGIC = b"REP1"
NUM_LAYERS = 3


@dataclass
class Sentence:
    """Token sequence with binary boundary-start labels."""
    tokens: list[str]
    labels: list[int]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValidationError("empty sentence")
        if len(self.tokens) != len(self.labels):
            raise ValidationError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        if any(l not in (0, 1) for l in self.labels):
            raise ValidationError(f"labels must be 0/1, got {self.labels}")
        if self.labels[0] != 0:
            raise ValidationError("first token can never start a new segment")

    def __len__(self):
        return len(self.tokens)


@dataclass
class Vocab:
    """Token/id bijection with reserved PAD=0 and UNK=1."""
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        assert self.itos[PAD_ID] == PAD_TOKEN and self.itos[UNK_ID] == UNK_TOKEN
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def id_of(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.id_of(t) for t in tokens], dtype=np.int64)


@dataclass
class EmbeddingTable:
    """Fixed word-vector table; rows indexed by vocab id."""
    dim: int
    matrix: np.ndarray  # |V| x dim, float32
    trainable: bool = False

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        return self.matrix[ids]


@dataclass
class Batch:
    """Padded, masked batch of sentences."""
    token_ids: np.ndarray            # B x T_max, int64
    reps: Optional[np.ndarray]       # B x L x T_max x D_c, float32, or None
    mask: np.ndarray                 # B x T_max, bool
    labels: np.ndarray               # B x T_max, int64 (0 at padding)
    lengths: list[int]
    sentences: list[Sentence]

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.token_ids.shape[1]


def load_corpus(path, max_len: int = 200) -> list[Sentence]:
    """Parse a token/label corpus file into validated sentences."""
    sentences: list[Sentence] = []
    tokens: list[str] = []
    labels: list[int] = []
    start_line = 1
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if line == "":
                if tokens:
                    _finish_sentence(tokens, labels, start_line, max_len, sentences)
                    tokens, labels = [], []
                start_line = lineno + 1
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'token<TAB>label'")
            token, raw_label = parts
            if raw_label not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {raw_label!r}")
            tokens.append(token)
            labels.append(int(raw_label))
    if tokens:
        _finish_sentence(tokens, labels, start_line, max_len, sentences)
    return sentences


def _finish_sentence(tokens, labels, start_line, max_len, out):
    if len(tokens) > max_len:
        raise ValidationError(
            f"sentence starting at line {start_line} has {len(tokens)} tokens, "
            f"cap is {max_len}")
    try:
        out.append(Sentence(list(tokens), list(labels)))
    except ValidationError as e:
        raise ValidationError(f"sentence starting at line {start_line}: {e}") from e


def write_corpus(sentences: list[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            for tok, lab in zip(sent.tokens, sent.labels):
                f.write(f"{tok}\t{lab}\n")
            f.write("\n")


def build_vocab(sentences: list[Sentence], min_count: int = 1) -> Vocab:
    """Frequency-thresholded vocabulary; order is count desc then lexicographic."""
    counts = Counter(tok for s in sentences for tok in s.tokens)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocab([PAD_TOKEN, UNK_TOKEN] + kept)


def load_word_embeddings(path, vocab: Vocab) -> EmbeddingTable:
    """Read plain-text vectors for the vocab; absent tokens get zero rows."""
    dim = None
    rows: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float32)
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: non-numeric value ({e})") from e
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FormatError(
                    f"{path}:{lineno}: dimension {len(vec)} differs from {dim}")
            idx = vocab.stoi.get(token)
            if idx is not None and idx not in (PAD_ID, UNK_ID):
                rows[idx] = vec
    if dim is None:
        raise FormatError(f"{path}: no embedding entries found")
    matrix = np.zeros((len(vocab), dim), dtype=np.float32)
    for idx, vec in rows.items():
        matrix[idx] = vec
    return EmbeddingTable(dim=dim, matrix=matrix, trainable=False)


def write_contextual_reps(reps: list[np.ndarray], path) -> None:
    """Write per-sentence L x T x D_c float32 arrays in REP1 layout."""
    if not reps:
        raise FormatError("cannot write an empty REP1 file")
    L, _, dc = reps[0].shape
    with open(path, "wb") as f:
        f.write(REP_MAGIC)
        f.write(struct.pack("<III", len(reps), L, dc))
        for i, arr in enumerate(reps):
            if arr.shape[0] != L or arr.shape[2] != dc:
                raise FormatError(f"sentence {i}: inconsistent L or D_c {arr.shape}")
            f.write(struct.pack("<I", arr.shape[1]))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_contextual_reps(path, sentences: Optional[list[Sentence]] = None
                         ) -> list[np.ndarray]:
    """Load a REP1 (or .jsonl debug) file; optionally check corpus alignment."""
    path = str(path)
    if path.endswith(".jsonl"):
        reps = _load_reps_jsonl(path)
    else:
        reps = _load_reps_binary(path)
    if sentences is not None:
        if len(reps) != len(sentences):
            raise AlignmentError(
                f"{path}: {len(reps)} sentences in reps vs {len(sentences)} in corpus")
        for i, (arr, sent) in enumerate(zip(reps, sentences)):
            if arr.shape[1] != len(sent):
                raise AlignmentError(
                    f"{path}: sentence {i}: reps have {arr.shape[1]} tokens, "
                    f"corpus has {len(sent)}")
    return reps


def _load_reps_binary(path) -> list[np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != REP_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {REP_MAGIC!r}")
        header = f.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated header")
        count, L, dc = struct.unpack("<III", header)
        if L != NUM_LAYERS:
            raise FormatError(f"{path}: expected {NUM_LAYERS} layers, got {L}")
        reps = []
        for i in range(count):
            raw_t = f.read(4)
            if len(raw_t) != 4:
                raise FormatError(f"{path}: truncated at sentence {i}")
            (t,) = struct.unpack("<I", raw_t)
            n = L * t * dc
            payload = f.read(4 * n)
            if len(payload) != 4 * n:
                raise FormatError(f"{path}: truncated payload at sentence {i}")
            arr = np.frombuffer(payload, dtype="<f4").reshape(L, t, dc)
            reps.append(np.array(arr))
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after last sentence")
    return reps


def _load_reps_jsonl(path) -> list[np.ndarray]:
    reps = []
    dc = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: bad JSON ({e})") from e
            arr = np.asarray(obj["layers"], dtype=np.float32)
            if arr.ndim != 3 or arr.shape[0] != NUM_LAYERS:
                raise FormatError(
                    f"{path}:{lineno}: layers must be {NUM_LAYERS}xTxD, got {arr.shape}")
            if dc is None:
                dc = arr.shape[2]
            elif arr.shape[2] != dc:
                raise FormatError(f"{path}:{lineno}: D_c changed from {dc} to {arr.shape[2]}")
            reps.append(arr)
    if not reps:
        raise FormatError(f"{path}: no sentences")
    return reps


def make_batches(sentences: list[Sentence], reps: Optional[list[np.ndarray]],
                 batch_size: int, vocab: Vocab,
                 shuffle_seed: Optional[int] = None) -> list[Batch]:
    """Group sentences into padded batches, optionally seeded-shuffled."""
    order = list(range(len(sentences)))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    batches = []
    for start in range(0, len(order), batch_size):
        idxs = order[start:start + batch_size]
        batches.append(_pad_batch([sentences[i] for i in idxs],
                                  [reps[i] for i in idxs] if reps is not None else None,
                                  vocab))
    return batches


def _pad_batch(sents: list[Sentence], reps: Optional[list[np.ndarray]],
               vocab: Vocab) -> Batch:
    b = len(sents)
    t_max = max(len(s) for s in sents)
    token_ids = np.full((b, t_max), PAD_ID, dtype=np.int64)
    labels = np.zeros((b, t_max), dtype=np.int64)
    mask = np.zeros((b, t_max), dtype=bool)
    rep_block = None
    if reps is not None:
        dc = reps[0].shape[2]
        rep_block = np.zeros((b, NUM_LAYERS, t_max, dc), dtype=np.float32)
    for i, s in enumerate(sents):
        n = len(s)
        token_ids[i, :n] = vocab.encode(s.tokens)
        labels[i, :n] = s.labels
        mask[i, :n] = True
        if rep_block is not None:
            rep_block[i, :, :n, :] = reps[i]
    return Batch(token_ids=token_ids, reps=rep_block, mask=mask, labels=labels,
                 lengths=[len(s) for s in sents], sentences=sents)
