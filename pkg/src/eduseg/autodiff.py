"""Dense tensors with tape-based reverse-mode automatic differentiation.

The op set is deliberately small: exactly what an LSTM stack, windowed
self-attention and a linear-chain CRF loss need. Values are stored as
row-major numpy arrays in either float32 (training/inference) or float64
(gradient checks and oracles). Ops record onto the innermost active
GradGraph; with no active graph they run as plain numpy, which is the
fast path used for decoding.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, MaskError, ShapeError


class Tensor:
    """N-dimensional value participating in a gradient graph.

    grad, when populated, always has the same shape as the data.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    def __add__(self, other):
        return add(self, as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


class Node:
    """One recorded operation: inputs, output, and its vjp."""

    __slots__ = ("op", "inputs", "output", "backward_fn", "forward_fn")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable, forward_fn: Callable[[], np.ndarray]):
        self.op = op
        self.inputs = list(inputs)
        self.output = output
        self.backward_fn = backward_fn
        self.forward_fn = forward_fn


_ACTIVE: list["GradGraph"] = []


class GradGraph:
    """Ordered tape of operations; inputs of every node precede it."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "GradGraph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE.pop()
        assert popped is self
        return False

    def replay(self) -> bool:
        """Recompute every node from its recorded inputs.

        Returns True iff every recomputed output is bit-identical to the
        recorded one. Recorded outputs are left untouched.
        """
        for node in self.nodes:
            fresh = np.asarray(node.forward_fn())
            if fresh.dtype != node.output.data.dtype:
                return False
            if not np.array_equal(fresh, node.output.data):
                return False
        return True


def _record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
            backward_fn: Callable, forward_fn: Callable[[], np.ndarray]) -> Tensor:
    out = Tensor(out_data)
    if _ACTIVE:
        out.requires_grad = any(t.requires_grad for t in inputs)
        _ACTIVE[-1].nodes.append(Node(op, inputs, out, backward_fn, forward_fn))
    return out


def backward(loss: Tensor, graph: GradGraph) -> dict:
    """Reverse-mode sweep from a scalar loss over a recorded graph.

    Accumulates into .grad of every requires_grad tensor reachable from
    the loss and returns a {tensor: gradient array} map for those leaves.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    produced = {id(n.output) for n in graph.nodes}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None:
                continue
            if not inp.requires_grad and id(inp) not in produced:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, copy=True)
            if inp.requires_grad and id(inp) not in produced:
                leaves[key] = inp
    leaf_grads: dict[Tensor, np.ndarray] = {}
    for key, tensor in leaves.items():
        g = grads[key].astype(tensor.data.dtype)
        tensor.grad = g if tensor.grad is None else tensor.grad + g
        leaf_grads[tensor] = tensor.grad
    return leaf_grads


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _record(
        "add", (a, b), out,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        lambda: a.data + b.data,
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _record(
        "sub", (a, b), out,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        lambda: a.data - b.data,
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _record(
        "mul", (a, b), out,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        lambda: a.data * b.data,
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    out = a.data @ b.data
    return _record(
        "matmul", (a, b), out,
        lambda g: (g @ b.data.T, a.data.T @ g),
        lambda: a.data @ b.data,
    )


def sigmoid(x: Tensor) -> Tensor:
    # two-branch form avoids overflow in exp for large |x|
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d)))).astype(d.dtype)
    return _record(
        "sigmoid", (x,), out,
        lambda g, out=out: (g * out * (1.0 - out),),
        lambda: np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                         np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data)))
                         ).astype(x.data.dtype),
    )


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _record(
        "tanh", (x,), out,
        lambda g, out=out: (g * (1.0 - out * out),),
        lambda: np.tanh(x.data),
    )


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _record(
        "concat", parts, out, bwd,
        lambda: np.concatenate([p.data for p in parts], axis=axis),
    )


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    if sum(sizes) != x.data.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis of {x.shape}")
    offsets = np.cumsum([0] + list(sizes))
    outs = []
    for i in range(len(sizes)):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        piece = np.take(x.data, range(lo, hi), axis=axis)

        def bwd(g, lo=lo, hi=hi):
            full = np.zeros_like(x.data)
            sl = [slice(None)] * x.data.ndim
            sl[axis] = slice(lo, hi)
            full[tuple(sl)] = g
            return (full,)

        outs.append(_record(
            "split", (x,), piece, bwd,
            lambda lo=lo, hi=hi: np.take(x.data, range(lo, hi), axis=axis),
        ))
    return outs


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return _record(
        "reshape", (x,), out,
        lambda g: (g.reshape(x.data.shape),),
        lambda: x.data.reshape(shape),
    )


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype),)
        gg = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a % x.data.ndim for a in axes):
                gg = np.expand_dims(gg, ax)
        return (np.broadcast_to(gg, x.data.shape).astype(x.data.dtype),)

    return _record("sum", (x,), out, bwd,
                   lambda: x.data.sum(axis=axis, keepdims=keepdims))


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.mean())
    return _record(
        "mean", (x,), out,
        lambda g: ((np.broadcast_to(g, x.data.shape) / n).astype(x.data.dtype),),
        lambda: np.asarray(x.data.mean()),
    )


def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Stable softmax over the last axis; masked positions get weight 0.

    mask is a boolean array broadcastable to x's shape (True = keep).
    """
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.data.shape)
        if not mask.any(axis=-1).all():
            raise MaskError("softmax mask leaves a row with no unmasked position")

    def fwd():
        d = x.data
        if mask is None:
            m = d.max(axis=-1, keepdims=True)
            e = np.exp(d - m)
        else:
            neg = np.where(mask, d, -np.inf)
            m = neg.max(axis=-1, keepdims=True)
            e = np.where(mask, np.exp(d - m), 0.0)
        return (e / e.sum(axis=-1, keepdims=True)).astype(d.dtype)

    out = fwd()

    def bwd(g, out=out):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (x,), out, bwd, fwd)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    def fwd():
        d = x.data
        m = d.max(axis=axis, keepdims=True)
        out = np.log(np.exp(d - m).sum(axis=axis, keepdims=True)) + m
        return np.squeeze(out, axis=axis)

    out = fwd()

    def bwd(g):
        d = x.data
        m = d.max(axis=axis, keepdims=True)
        e = np.exp(d - m)
        soft = e / e.sum(axis=axis, keepdims=True)
        return (np.expand_dims(g, axis) * soft,)

    return _record("logsumexp", (x,), out, bwd, fwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with an explicit seeded mask; rate 0 is the identity."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.data.dtype)
    factor = keep.astype(x.data.dtype) * scale
    out = x.data * factor
    return _record(
        "dropout", (x,), out,
        lambda g: (g * factor,),
        lambda: x.data * factor,
    )


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out = np.stack([p.data for p in parts], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _record("stack", parts, out, bwd,
                   lambda: np.stack([p.data for p in parts], axis=axis))
