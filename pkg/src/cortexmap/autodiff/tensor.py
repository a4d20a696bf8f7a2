"""Dense tensors with reverse-mode automatic differentiation.

Operations record themselves on the currently active :class:`Tape` whenever
any input requires a gradient. Calling :func:`backward` replays the tape in
reverse execution order, accumulating gradients additively into ``.grad``.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class AutodiffError(Exception):
    """Raised for invalid autodiff usage (shape mismatch, non-scalar loss)."""


class Tensor:
    """A dense n-dimensional array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    # -- gradient plumbing ---------------------------------------------
    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise AutodiffError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)


class _Record:
    """One executed operation: inputs, output, and its backward rule."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed operations for backpropagation."""

    def __init__(self):
        self._records: list[_Record] = []

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward_fn: Callable):
        self._records.append(_Record(tuple(inputs), output, backward_fn))

    def clear(self):
        self._records.clear()


_TAPE_STACK: list[Optional[Tape]] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_grad:
    """Context manager disabling tape recording."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False


def _record(inputs, output, backward_fn):
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.record(inputs, output, backward_fn)


def backward(tape: Tape, loss: Tensor):
    """Backpropagate from a scalar loss through every recorded operation.

    Each record is visited exactly once, in reverse execution order; records
    whose output received no gradient are skipped.
    """
    if not isinstance(loss, Tensor):
        raise AutodiffError("loss must be a Tensor")
    if loss.data.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.data.shape}")
    if len(tape) == 0:
        raise AutodiffError("tape is empty, nothing to backpropagate")
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape._records):
        out_grad = rec.output.grad
        if out_grad is None:
            continue
        grads = rec.backward_fn(out_grad)
        for inp, g in zip(rec.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            inp.accumulate_grad(g)


# ---------------------------------------------------------------------------
# elementwise and reduction operations
# ---------------------------------------------------------------------------


def _as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    _record((a, b), out, bwd)
    return out


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    _record((a, b), out, bwd)
    return out


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = Tensor(a.data * b.data)

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    _record((a, b), out, bwd)
    return out


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = Tensor(a.data / b.data)

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    _record((a, b), out, bwd)
    return out


def matmul(a: Tensor, b: Tensor):
    if a.data.shape[-1] != b.data.shape[0 if b.data.ndim <= 2 else -2]:
        raise AutodiffError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def bwd(g):
        if b.data.ndim == 1:
            ga = np.outer(g, b.data) if a.data.ndim == 2 else g * b.data
            gb = a.data.T @ g if a.data.ndim == 2 else a.data * g
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    _record((a, b), out, bwd)
    return out


def tsum(a: Tensor, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.shape).astype(a.dtype, copy=False),)

    _record((a,), out, bwd)
    return out


def tmean(a: Tensor, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)]
    )
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / float(count))


def exp(a: Tensor):
    out = Tensor(np.exp(a.data))

    def bwd(g):
        return (g * out.data,)

    _record((a,), out, bwd)
    return out


def log(a: Tensor):
    out = Tensor(np.log(a.data))

    def bwd(g):
        return (g / a.data,)

    _record((a,), out, bwd)
    return out


def sqrt(a: Tensor):
    out = Tensor(np.sqrt(a.data))

    def bwd(g):
        return (g * 0.5 / out.data,)

    _record((a,), out, bwd)
    return out


def square(a: Tensor):
    return mul(a, a)


def relu(a: Tensor):
    out = Tensor(np.maximum(a.data, 0))

    def bwd(g):
        return (g * (a.data > 0),)

    _record((a,), out, bwd)
    return out


def leaky_relu(a: Tensor, alpha: float = 0.2):
    out = Tensor(np.where(a.data > 0, a.data, alpha * a.data))

    def bwd(g):
        return (g * np.where(a.data > 0, 1.0, alpha).astype(a.dtype),)

    _record((a,), out, bwd)
    return out


def reshape(a: Tensor, shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        return (g.reshape(a.shape),)

    _record((a,), out, bwd)
    return out


def transpose(a: Tensor, axes=None):
    out = Tensor(a.data.transpose(axes))

    def bwd(g):
        inv = None if axes is None else np.argsort(axes)
        return (g.transpose(inv),)

    _record((a,), out, bwd)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    _record(tuple(tensors), out, bwd)
    return out


def gather(a: Tensor, indices: np.ndarray, axis: int = 0):
    """Select rows (or slices along `axis`) by integer index, differentiable."""
    indices = np.asarray(indices)
    out = Tensor(np.take(a.data, indices, axis=axis))

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (slice(None),) * axis + (indices,), g)
        return (ga,)

    _record((a,), out, bwd)
    return out


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int):
    """Sum rows of `a` into `num_segments` buckets given per-row segment ids."""
    segment_ids = np.asarray(segment_ids)
    if segment_ids.shape[0] != a.data.shape[0]:
        raise AutodiffError(
            f"segment_ids length {segment_ids.shape[0]} != leading dim {a.data.shape[0]}"
        )
    out_data = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(out_data, segment_ids, a.data)
    out = Tensor(out_data)

    def bwd(g):
        return (g[segment_ids],)

    _record((a,), out, bwd)
    return out


def maximum_const(a: Tensor, value: float):
    out = Tensor(np.maximum(a.data, value))

    def bwd(g):
        return (g * (a.data > value),)

    _record((a,), out, bwd)
    return out


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool):
    """Inverted dropout: scales by 1/keep at train time, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise AutodiffError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    keep = 1.0 - p
    mask = (rng.random(a.shape) < keep).astype(a.dtype) / keep
    return mul(a, Tensor(mask))
