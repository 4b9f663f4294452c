"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap numpy arrays. While a Tape is active (``with Tape() as t:``),
every primitive op appends a node holding its parents and a vector-Jacobian
closure; because nodes are appended in creation order, the tape list is
already topologically sorted and ``backward`` is a single reverse sweep.
With no active tape, ops run as plain numpy (fast inference path).

Float width is float32 by default; gradient checks switch to float64 via
``using_dtype``. ``set_debug_checks(True)`` asserts finiteness after every
forward op.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_tls = threading.local()

_DEFAULT_DTYPE = np.float32
_DEBUG_CHECKS = False

_uid_counter = itertools.count()


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _DEFAULT_DTYPE = dtype


class using_dtype:
    """Context manager that temporarily switches the default float width."""

    def __init__(self, dtype):
        self.dtype = dtype
        self._saved = None

    def __enter__(self):
        global _DEFAULT_DTYPE
        self._saved = _DEFAULT_DTYPE
        set_default_dtype(self.dtype)
        return self

    def __exit__(self, *exc):
        set_default_dtype(self._saved)
        return False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every forward op."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


def active_tape() -> Optional["Tape"]:
    return getattr(_tls, "tape", None)


class suspend_tape:
    """Run a forward pass without recording, inside an active tape."""

    def __enter__(self):
        self._saved = active_tape()
        _tls.tape = None
        return self

    def __exit__(self, *exc):
        _tls.tape = self._saved
        return False


class Tensor:
    """A dense real array, optionally tracked for gradients.

    ``data`` is row-major; ``requires_grad`` marks trainable leaves. ``grad``
    is populated on leaves by ``Tape.backward``.
    """

    __slots__ = ("data", "requires_grad", "grad", "uid")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.uid = next(_uid_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operators delegate to the module-level primitives
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; use reciprocal math")
        return mul(self, 1.0 / float(other))


class _Node:
    __slots__ = ("out", "parents", "vjp")

    def __init__(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable):
        self.out = out
        self.parents = parents
        self.vjp = vjp


class Tape:
    """Recording of primitive ops, in creation (= topological) order.

    Single-owner per training step: enter, run the forward pass, call
    ``backward`` on a scalar loss, exit. Gradient buffers are keyed by the
    node uid while the sweep runs; leaf gradients land on ``Tensor.grad``.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.grads: dict[int, np.ndarray] = {}

    def __enter__(self):
        if active_tape() is not None:
            raise ContractError("a tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc):
        _tls.tape = None
        return False

    def record(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable) -> None:
        self.nodes.append(_Node(out, parents, vjp))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from loss."""
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        self.grads = {loss.uid: np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = self.grads.pop(node.out.uid, None)
            if g is None:
                continue
            parent_grads = node.vjp(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                # numpy returns immutable scalars for 0-d math; buffers must
                # be real arrays or in-place accumulation silently drops
                pg_arr = np.asarray(pg)
                acc = self.grads.get(parent.uid)
                if acc is None:
                    # copy views and pass-through aliases of g before they
                    # become an accumulation buffer we mutate in place
                    if pg_arr is g or not pg_arr.flags.owndata:
                        pg_arr = pg_arr.copy()
                    self.grads[parent.uid] = pg_arr
                else:
                    acc += pg_arr
        # whatever is left belongs to leaves (no node produced them)
        for node in self.nodes:
            for parent in node.parents:
                g = self.grads.pop(parent.uid, None)
                if g is not None:
                    if parent.grad is None:
                        parent.grad = g
                    else:
                        parent.grad = parent.grad + g
        self.grads = {}


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


def _finish(out_data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _finish(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _finish(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _finish(out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 1 and b.ndim == 2:
            return g @ b.data.T, np.outer(a.data, g)
        if a.ndim == 2 and b.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        # 1-D dot 1-D -> scalar
        return g * b.data, g * a.data

    return _finish(out, (a, b), vjp)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _finish(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _finish(out, (a,), vjp)


def relu(a) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0),)

    return _finish(out, (a,), vjp)


def log(a) -> Tensor:
    a = _wrap(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _finish(out, (a,), vjp)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _finish(out, (a,), vjp)


def square(a) -> Tensor:
    a = _wrap(a)
    out = a.data * a.data

    def vjp(g):
        return (2.0 * g * a.data,)

    return _finish(out, (a,), vjp)


# ---------------------------------------------------------------------------
# reductions and shape ops

def reduce_sum(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _finish(out, (a,), vjp)


def mean(a, axis: Optional[int] = None) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis), 1.0 / n)


def reduce_max(a, axis: int) -> Tensor:
    """Max along one axis; the gradient routes to the (first) argmax."""
    a = _wrap(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return _finish(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _finish(out, (a,), vjp)


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    out = a.data.T.copy()

    def vjp(g):
        return (g.T.copy(),)

    return _finish(out, (a,), vjp)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, bounds, axis=axis))

    return _finish(out, tuple(parts), vjp)


def narrow(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop) along one axis."""
    a = _wrap(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = a.data[index].copy()

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[index] = g
        return (ga,)

    return _finish(out, (a,), vjp)


def pick(a, index) -> Tensor:
    """Single element as a scalar tensor; index is an int or tuple of ints."""
    a = _wrap(a)
    out = np.asarray(a.data[index])

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[index] = g
        return (ga,)

    return _finish(out, (a,), vjp)


def embedding(table, ids) -> Tensor:
    """Row lookup: table [V x d], ids int array of any shape -> [*ids.shape, d]."""
    table = _wrap(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.data.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}")
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return (gt,)

    return _finish(out, (table,), vjp)


# ---------------------------------------------------------------------------
# softmax family

def _masked_logits(x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return x
    neg = np.asarray(-1e30, dtype=x.dtype)
    return np.where(mask, x, neg)


def softmax(a, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Stable softmax along ``axis``; False entries of ``mask`` get weight 0."""
    a = _wrap(a)
    z = _masked_logits(a.data, mask)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _finish(out, (a,), vjp)


def log_softmax(a, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    a = _wrap(a)
    z = _masked_logits(a.data, mask)
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def vjp(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _finish(out, (a,), vjp)


# ---------------------------------------------------------------------------
# sequence convolution

def conv1d(x, filters) -> Tensor:
    """1-D convolution over the sequence axis with zero same-padding.

    x: [length x d_in], filters: [k x d_in x d_f] with k odd. Output
    [length x d_f]. Implemented by an im2col matmul so both gradients fall
    out of matrix calculus plus a pad-window scatter.
    """
    x, filters = _wrap(x), _wrap(filters)
    if filters.ndim != 3:
        raise ShapeError(f"filters must be [k x d_in x d_f], got {filters.shape}")
    k, d_in, d_f = filters.data.shape
    if k % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {k}")
    if x.ndim != 2 or x.data.shape[1] != d_in:
        raise ShapeError(f"input {x.shape} does not match filters {filters.shape}")
    length = x.data.shape[0]
    half = k // 2
    padded = np.zeros((length + 2 * half, d_in), dtype=x.data.dtype)
    padded[half:half + length] = x.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, k, axis=0)
    # windows: [length x d_in x k] -> columns [length x (k*d_in)]
    cols = windows.transpose(0, 2, 1).reshape(length, k * d_in)
    w2d = filters.data.reshape(k * d_in, d_f)
    out = cols @ w2d

    def vjp(g):
        gw = (cols.T @ g).reshape(k, d_in, d_f)
        gcols = g @ w2d.T  # [length x k*d_in]
        gpad = np.zeros_like(padded)
        gply = gcols.reshape(length, k, d_in)
        for off in range(k):
            gpad[off:off + length] += gply[:, off, :]
        return gpad[half:half + length], gw

    return _finish(out, (x, filters), vjp)


__all__ = [
    "Tensor", "Tape", "active_tape",
    "set_default_dtype", "default_dtype", "using_dtype",
    "set_debug_checks", "debug_checks_enabled",
    "add", "sub", "mul", "matmul", "tanh", "sigmoid", "relu", "log", "exp",
    "square", "reduce_sum", "mean", "reduce_max", "reshape", "transpose",
    "concat", "narrow", "pick", "embedding", "softmax", "log_softmax",
    "conv1d",
]
