"""Minimal dense tensor engine with a reverse-mode tape.

Values are float64 numpy arrays. Every primitive computes its forward result
eagerly and, when any input requires a gradient, records a closure that maps
the upstream gradient to one gradient per parent. ``Tensor.backward`` walks
the recorded graph in reverse topological order.

Matrix products are the only operations that perform multiply-accumulates in
this package; they report to the active :class:`MacCounter` (if any), tagged
with the innermost :func:`mac_scope` label.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

DTYPE = np.float64
LN_EPS = 1e-6


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by {op!r}")
        self.op = op


class ShapeError(ValueError):
    """Raised on incompatible operand shapes."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring it."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# MAC instrumentation

class MacCounter:
    """Tally of multiply-accumulates executed by ``matmul``, keyed by scope tag."""

    def __init__(self):
        self.terms: dict[str, int] = defaultdict(int)

    @property
    def total(self) -> int:
        return sum(self.terms.values())

    def add(self, tag: str, n: int):
        self.terms[tag] += int(n)


_COUNTER: contextvars.ContextVar[MacCounter | None] = contextvars.ContextVar("mac_counter", default=None)
_SCOPE: contextvars.ContextVar[str] = contextvars.ContextVar("mac_scope", default="")


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    token = _COUNTER.set(counter)
    try:
        yield counter
    finally:
        _COUNTER.reset(token)


@contextlib.contextmanager
def mac_scope(tag: str):
    """Label MACs issued inside the block; nested scopes join with ``/``."""
    parent = _SCOPE.get()
    token = _SCOPE.set(f"{parent}/{tag}" if parent else tag)
    try:
        yield
    finally:
        _SCOPE.reset(token)


# ---------------------------------------------------------------------------
# primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), backward, "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)

    return _make(a.data * b.data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Product over the last two axes; leading axes broadcast as in ``np.matmul``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    sa, sb = a.shape, b.shape
    k = sa[-1]
    if b.ndim == 2:
        # weight-style product: one 2-D GEMM over all leading rows
        out = (a.data.reshape(-1, k) @ b.data).reshape(*sa[:-1], sb[-1])
    else:
        out = np.matmul(a.data, b.data)
    counter = _COUNTER.get()
    if counter is not None:
        counter.add(_SCOPE.get() or "other", out.size * k)

    if b.ndim == 2:
        def backward(g):
            g2 = g.reshape(-1, sb[-1])
            ga = (g2 @ b.data.T).reshape(sa) if a.requires_grad else None
            gb = a.data.reshape(-1, k).T @ g2 if b.requires_grad else None
            return ga, gb

        return _make(out, (a, b), backward, "matmul")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, sa),
            None if gb is None else _unbroadcast(gb, sb),
        )

    return _make(out, (a, b), backward, "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a: Tensor, idx) -> Tensor:
    src = a.shape

    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)

    def backward(g):
        full = np.zeros(src, dtype=DTYPE)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        return (full,)

    return _make(np.array(a.data[idx]), (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def sorted_mean(a: Tensor, axis: int) -> Tensor:
    """Mean along ``axis`` summed in sorted order.

    The result is bitwise independent of the ordering of the reduced axis,
    which makes exact permutation-invariance checks possible.
    """
    n = a.shape[axis]
    src = a.shape
    out = np.sort(a.data, axis=axis).sum(axis=axis) / n

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, src).copy(),)

    return _make(out, (a,), backward, "sorted_mean")


def softmax_lastdim(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError("softmax needs a non-empty last dimension")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if d < 1:
        raise ShapeError("layer_norm needs d >= 1")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = gxhat = None
        if x.requires_grad:
            gxhat = g * gamma.data
            gx = inv * (
                gxhat
                - gxhat.mean(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gamma, beta), backward, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = ndtr(x.data)

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
        return (g * (cdf + x.data * pdf),)

    return _make(x.data * cdf, (x,), backward, "gelu")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``logits[B, C]`` against integer ``labels[B]``."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / len(labels),)

    return _make(np.asarray(loss), (logits,), backward, "cross_entropy")


def shift_array(x: np.ndarray, offsets: np.ndarray, axis: int, boundary: str = "zero") -> np.ndarray:
    """``out[.., t, .., c] = x[.., t + offsets[c], .., c]`` along ``axis``; c is the last axis.

    Frames outside ``[0, T)`` read as zero. ``boundary="wrap"`` wraps around
    instead; it exists only for fault-injection checks.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.shape != (x.shape[-1],):
        raise ShapeError(f"need one offset per channel ({x.shape[-1]}), got {offsets.shape}")
    axis = axis % x.ndim
    if not offsets.any():
        return x
    n = x.shape[axis]
    src = np.moveaxis(x, axis, 0)
    out = np.zeros_like(src)
    for o in np.unique(offsets):
        ch = np.flatnonzero(offsets == o)
        sl = slice(ch[0], ch[-1] + 1) if ch[-1] - ch[0] + 1 == len(ch) else ch
        if boundary == "wrap":
            out[..., sl] = np.roll(src[..., sl], -o, axis=0)
            continue
        if boundary != "zero":
            raise ValueError(f"unknown boundary mode {boundary!r}")
        lo, hi = max(0, -o), min(n, n - o)
        if lo < hi:
            out[lo:hi, ..., sl] = src[lo + o:hi + o, ..., sl]
    return np.moveaxis(out, 0, axis)


def temporal_shift(x: Tensor, offsets, axis: int, boundary: str = "zero") -> Tensor:
    """Channel-wise shift along a time axis; pure data movement, zero MACs.

    The backward pass is the adjoint shift (negated offsets), which is again a
    zero-filled shift.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if not offsets.any():
        return x

    def backward(g):
        return (shift_array(g, -offsets, axis, boundary),)

    return _make(shift_array(x.data, offsets, axis, boundary), (x,), backward, "temporal_shift")


def parameters_zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
