"""Bit-exact checkpoint container (CKPT1).

Layout, all little-endian:
    magic "CKPT1" | u32 format version | u32 CRC32 of payload | payload
Payload is a u32 record count followed by records sorted by name:
    u16 name length | name (UTF-8) | u8 kind | body
Kind 0 = float32 tensor, 1 = float64 tensor, 2 = int64 tensor,
kind 3 = UTF-8 JSON blob. Tensor body: u8 ndim, u32 dims..., raw values.
JSON body: u64 byte length, bytes. Serialization is canonical, so two
saves of the same checkpoint are byte-identical.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig
from .corpus import EmbeddingTable, Vocab
from .errors import ChecksumError, FormatError, UnknownTensorError, VersionError

MAGIC = b"CKPT1"
VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}
_JSON_KIND = 3


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocab
    params: dict[str, np.ndarray]
    ema: dict[str, np.ndarray]
    embedding: EmbeddingTable
    rep_dim: Optional[int] = None
    opt_state: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # e.g. best epoch, metrics


def _encode_tensor(arr: np.ndarray) -> bytes:
    dtype = np.dtype(arr.dtype)
    if dtype not in _TAG_FOR:
        raise FormatError(f"unsupported tensor dtype {dtype}")
    head = struct.pack("<B", len(arr.shape))
    head += b"".join(struct.pack("<I", d) for d in arr.shape)
    return struct.pack("<B", _TAG_FOR[dtype]) + head + arr.astype(dtype.newbyteorder("<")).tobytes()


def _encode_json(obj) -> bytes:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<B", _JSON_KIND) + struct.pack("<Q", len(blob)) + blob


def _records(ckpt: Checkpoint) -> dict[str, bytes]:
    recs: dict[str, bytes] = {}
    for name, arr in ckpt.params.items():
        recs[f"param/{name}"] = _encode_tensor(arr)
    for name, arr in ckpt.ema.items():
        recs[f"ema/{name}"] = _encode_tensor(arr)
    for name, arr in ckpt.opt_state.items():
        recs[f"opt/{name}"] = _encode_tensor(arr)
    recs["meta/config"] = _encode_json(ckpt.config.to_dict())
    recs["meta/vocab"] = _encode_json(ckpt.vocab.itos)
    recs["meta/extra"] = _encode_json(ckpt.extra)
    recs["meta/rep_dim"] = _encode_json(ckpt.rep_dim)
    recs["frozen/embedding"] = _encode_tensor(ckpt.embedding.matrix)
    return recs


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Atomic canonical write: temp file in the same directory, then rename."""
    recs = _records(ckpt)
    payload = struct.pack("<I", len(recs))
    for name in sorted(recs):
        encoded = name.encode("utf-8")
        payload += struct.pack("<H", len(encoded)) + encoded + recs[name]
    blob = MAGIC + struct.pack("<II", VERSION, zlib.crc32(payload)) + payload
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:5]!r}, expected {MAGIC!r}")
    version, crc = struct.unpack("<II", blob[5:13])
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, supported {VERSION}")
    payload = blob[13:]
    if zlib.crc32(payload) != crc:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    (count,) = struct.unpack_from("<I", payload, 0)
    offset = 4
    recs: dict[str, tuple[int, object]] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", payload, offset)
        offset += 2
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        kind = payload[offset]
        offset += 1
        if kind == _JSON_KIND:
            (blen,) = struct.unpack_from("<Q", payload, offset)
            offset += 8
            value = json.loads(payload[offset:offset + blen].decode("utf-8"))
            offset += blen
        elif kind in _DTYPE_TAGS:
            ndim = payload[offset]
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", payload, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            dtype = _DTYPE_TAGS[kind]
            value = np.frombuffer(payload, dtype=dtype, count=n, offset=offset
                                  ).reshape(shape).copy()
            offset += n * dtype.itemsize
        else:
            raise FormatError(f"{path}: unknown record kind {kind} for {name!r}")
        recs[name] = (kind, value)
    return _assemble(path, recs)


def _assemble(path, recs) -> Checkpoint:
    def take(name):
        if name not in recs:
            raise UnknownTensorError(f"{path}: missing record {name!r}")
        return recs.pop(name)[1]

    config = TrainConfig.from_dict(take("meta/config"))
    vocab = Vocab(take("meta/vocab"))
    extra = take("meta/extra")
    rep_dim = take("meta/rep_dim")
    emb_matrix = take("frozen/embedding")
    params, ema, opt = {}, {}, {}
    for name, (kind, value) in recs.items():
        if kind == _JSON_KIND:
            raise FormatError(f"{path}: unexpected JSON record {name!r}")
        if name.startswith("param/"):
            params[name[len("param/"):]] = value
        elif name.startswith("ema/"):
            ema[name[len("ema/"):]] = value
        elif name.startswith("opt/"):
            opt[name[len("opt/"):]] = value
        else:
            raise UnknownTensorError(f"{path}: unexpected tensor record {name!r}")
    return Checkpoint(
        config=config, vocab=vocab, params=params, ema=ema,
        embedding=EmbeddingTable(dim=emb_matrix.shape[1], matrix=emb_matrix,
                                 trainable=False),
        rep_dim=rep_dim, opt_state=opt, extra=extra,
    )


def build_model(ckpt: Checkpoint, use_ema: bool = True):
    """Reconstruct a SegmenterModel from a checkpoint, EMA weights by default."""
    from .model import SegmenterModel
    model = SegmenterModel(ckpt.config, ckpt.vocab, ckpt.embedding, ckpt.rep_dim)
    weights = dict(ckpt.params)
    if use_ema and ckpt.ema:
        weights.update(ckpt.ema)
    expected = set(model.named_parameters())
    given = set(weights)
    if given != expected:
        raise UnknownTensorError(
            f"checkpoint parameters {sorted(given ^ expected)} do not match the model")
    model.set_parameters(weights)
    return model
