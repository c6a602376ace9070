"""Reverse-mode automatic differentiation over dense float64 arrays.

A small dynamic-tape engine: while a :class:`Tape` is active, every
operation whose inputs require gradients records a vector-Jacobian rule.
``backward`` replays the tape in exact reverse execution order, buffering
gradients of intermediate values per pass and accumulating into the
``grad`` field of leaf tensors (parameters and user inputs).

All data is float64. Forward values are plain numpy computations and are
bit-reproducible for identical inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, FlowgatError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Dense array with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def copy(self):
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad)
        return t

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the named functions below are the actual ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of one forward pass, replayed backwards.

    Each entry is ``(output, inputs, vjp)`` where ``vjp(grad_out)`` returns
    one gradient array (or None) per input. Entries are appended in
    execution order; ``backward`` walks them in reverse, which is a valid
    topological order of the dynamic graph.
    """

    def __init__(self):
        self.ops = []
        self._produced = set()

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out, inputs, vjp):
        out.requires_grad = True
        self.ops.append((out, inputs, vjp))
        self._produced.add(id(out))

    def backward(self, loss):
        backward(loss, self)


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record_op(out, inputs, vjp):
    """Register a custom op on the active tape (no-op when none is active)."""
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, vjp)
    return out


def backward(loss, tape):
    """Populate gradients of everything ``loss`` depends on through ``tape``.

    Gradients of intermediate values live in per-pass buffers; gradients of
    leaf tensors accumulate into ``Tensor.grad``, so repeated calls without
    ``zero_grad`` sum their contributions.
    """
    if loss.data.size != 1:
        raise FlowgatError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    buffers = {id(loss): np.ones_like(loss.data)}
    produced = tape._produced
    for out, inputs, vjp in reversed(tape.ops):
        g = buffers.pop(id(out), None)
        if g is None:
            continue
        for tensor, gi in zip(inputs, vjp(g)):
            if gi is None or not tensor.requires_grad:
                continue
            if id(tensor) in produced:
                key = id(tensor)
                if key in buffers:
                    buffers[key] = buffers[key] + gi
                else:
                    buffers[key] = gi
            else:
                tensor.accumulate_grad(gi)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a, b):
    """Matrix product of two 2-D tensors; dC flows back as dC·Bᵀ and Aᵀ·dC."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return record_op(out, (a, b), vjp)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data + b.data)
    except ValueError as e:
        raise DimensionError(str(e)) from None

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record_op(out, (a, b), vjp)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data - b.data)
    except ValueError as e:
        raise DimensionError(str(e)) from None

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return record_op(out, (a, b), vjp)


def mul(a, b):
    """Hadamard product (with numpy broadcasting; scalars allowed)."""
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data * b.data)
    except ValueError as e:
        raise DimensionError(str(e)) from None

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return record_op(out, (a, b), vjp)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError as e:
        raise DimensionError(str(e)) from None
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return record_op(out, tuple(tensors), vjp)


def leaky_relu(x, slope=0.2):
    """max(x, slope*x); the subgradient at 0 takes the positive branch."""
    x = _as_tensor(x)
    out = Tensor(np.where(x.data >= 0.0, x.data, slope * x.data))
    deriv = np.where(x.data >= 0.0, 1.0, slope)

    def vjp(g):
        return (g * deriv,)

    return record_op(out, (x,), vjp)


def relu(x):
    x = _as_tensor(x)
    out = Tensor(np.where(x.data >= 0.0, x.data, 0.0))
    deriv = np.where(x.data >= 0.0, 1.0, 0.0)

    def vjp(g):
        return (g * deriv,)

    return record_op(out, (x,), vjp)


def tanh(x):
    x = _as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)

    def vjp(g):
        return (g * (1.0 - y * y),)

    return record_op(out, (x,), vjp)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    x = _as_tensor(x)
    y = _sigmoid(x.data)
    out = Tensor(y)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return record_op(out, (x,), vjp)


def transpose(x):
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {x.data.shape}")
    out = Tensor(x.data.T.copy())

    def vjp(g):
        return (g.T,)

    return record_op(out, (x,), vjp)


def reshape(x, shape):
    x = _as_tensor(x)
    try:
        out = Tensor(x.data.reshape(shape))
    except ValueError as e:
        raise DimensionError(str(e)) from None
    orig = x.data.shape

    def vjp(g):
        return (g.reshape(orig),)

    return record_op(out, (x,), vjp)


def flatten(x):
    return reshape(x, (-1,))


def tsum(x):
    """Sum of all entries, as a scalar tensor."""
    x = _as_tensor(x)
    out = Tensor(np.sum(x.data))

    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return record_op(out, (x,), vjp)


def slice_rows(x, start, stop):
    x = _as_tensor(x)
    if not 0 <= start < stop <= x.data.shape[0]:
        raise DimensionError(f"slice_rows({start},{stop}) out of bounds for shape {x.data.shape}")
    out = Tensor(x.data[start:stop].copy())
    full = x.data.shape

    def vjp(g):
        gx = np.zeros(full)
        gx[start:stop] = g
        return (gx,)

    return record_op(out, (x,), vjp)


def masked_softmax(scores, mask):
    """Softmax over the last axis restricted to ``mask``; masked entries are 0.

    Stable via max subtraction over the unmasked entries. Every row must
    have at least one unmasked entry.
    """
    scores = _as_tensor(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.data.shape:
        raise DimensionError(f"mask shape {mask.shape} != scores shape {scores.data.shape}")
    if not mask.any(axis=-1).all():
        raise FlowgatError("masked_softmax: a row has every entry masked")
    neg = np.where(mask, scores.data, -np.inf)
    m = neg.max(axis=-1, keepdims=True)
    e = np.exp(np.where(mask, scores.data - m, -np.inf))
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def vjp(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (y * (g - dot),)

    return record_op(out, (scores,), vjp)
