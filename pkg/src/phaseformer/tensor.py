"""Dense tensors with reverse-mode automatic differentiation.

The engine is a small tape: every operation touching a tracked tensor
records its parents and a vector-Jacobian closure on the result. Calling
:func:`backward` on a scalar walks the tape once in reverse topological
order and accumulates (never overwrites) gradients into every tracked
tensor it reaches.

Only float32/float64 data is supported. Image features use N,C,H,W axis
order throughout. Broadcasting is supported for the patterns the network
needs (scalar-with-tensor and per-channel/per-head shapes); gradients of
broadcast operands are summed back down to the operand's shape.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import DimensionError, UsageError

_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """N-dimensional real array with optional gradient tracking."""

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _vjp=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32 if arr.dtype.kind in "iub" else np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._item_error()

    def _item_error(self):
        raise UsageError(f"item() requires a single-element tensor, got shape {self.shape}")

    def numpy(self):
        """Read-only view of the underlying array."""
        return self.data

    # -- graph manipulation --------------------------------------------------

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_scalar(self, exponent)

    def __getitem__(self, index):
        return narrow(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def abs(self):
        return tabs(self)

    def sqrt(self):
        return tsqrt(self)

    def clamp(self, lo, hi):
        return clamp(self, lo, hi)

    def astype(self, dtype):
        return cast(self, dtype)


class Parameter(Tensor):
    """A leaf tensor trained by the optimizer; named when registered."""

    def __init__(self, data, dtype=None, name=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


# -- tape plumbing -------------------------------------------------------------


def _coerce(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _node(data, parents, vjp):
    """Wrap a forward result, recording the tape edge when tracking is on."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _vjp=vjp)
    return Tensor(data)


def _reduce_to(grad, shape, dtype):
    """Sum a broadcast gradient back down to `shape` and cast to `dtype`."""
    if grad.shape != shape:
        extra = grad.ndim - len(shape)
        if extra > 0:
            grad = grad.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(dtype, copy=False)


def backward(loss):
    """Populate .grad on every tracked tensor reachable from a scalar loss.

    Repeated calls accumulate into existing gradients.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")

    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.requires_grad:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
        if node._vjp is None:
            continue
        for parent, pgrad in zip(node._parents, node._vjp(grad)):
            if pgrad is None or not (parent.requires_grad or parent._parents):
                continue
            pgrad = _reduce_to(pgrad, parent.data.shape, parent.data.dtype)
            key = id(parent)
            pending[key] = pgrad if key not in pending else pending[key] + pgrad


# -- elementwise arithmetic -----------------------------------------------------


def add(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float32))
    b = _coerce(b, a.dtype)
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float32))
    b = _coerce(b, a.dtype)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float32))
    b = _coerce(b, a.dtype)
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float32))
    b = _coerce(b, a.dtype)
    out = a.data / b.data
    return _node(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,))


def pow_scalar(a, exponent):
    e = float(exponent)
    out = a.data**e
    return _node(out, (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def tabs(a):
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tsqrt(a):
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def square(a):
    return _node(a.data * a.data, (a,), lambda g: (g * 2.0 * a.data,))


def texp(a):
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def tcos(a):
    return _node(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def tsin(a):
    return _node(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def atan2(y, x):
    """Elementwise atan2 with atan2(0, 0) := 0 and zero gradient there."""

    def vjp(g):
        denom = x.data * x.data + y.data * y.data
        safe = np.where(denom == 0.0, 1.0, denom)
        gy = np.where(denom == 0.0, 0.0, g * x.data / safe)
        gx = np.where(denom == 0.0, 0.0, -g * y.data / safe)
        return gy, gx

    return _node(np.arctan2(y.data, x.data), (y, x), vjp)


def clamp(a, lo, hi):
    mask = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def cast(a, dtype):
    dt = np.dtype(dtype)
    return _node(a.data.astype(dt), (a,), lambda g: (g,))


# -- reductions -----------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for {ndim}-d tensor")
    return tuple(ax % ndim for ax in axes)


def tsum(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape),)

    return _node(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    axes = _norm_axes(axis, a.ndim)
    out = a.data.mean(axis=axes, keepdims=keepdims)
    count = a.data.size if axes is None else int(np.prod([a.data.shape[ax] for ax in axes]))

    def vjp(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape) / count,)

    return _node(out, (a,), vjp)


# -- shape manipulation -----------------------------------------------------------


def reshape(a, shape):
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    inverse = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def narrow(a, index):
    """Basic slicing; the gradient scatters back into a zero tensor."""
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(out, (a,), vjp)


def concat(tensors, axis=0):
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _node(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


# -- linear algebra ----------------------------------------------------------------


def matmul(a, b):
    """Batched matrix product; batch dimensions must match exactly."""
    if a.data.shape[:-2] != b.data.shape[:-2]:
        raise DimensionError(
            f"matmul batch dims differ: {a.data.shape[:-2]} vs {b.data.shape[:-2]}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dims differ: {a.data.shape[-1]} vs {b.data.shape[-2]}"
        )

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _node(np.matmul(a.data, b.data), (a, b), vjp)


def zeros(shape, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype))


def ones(shape, dtype=np.float32):
    return Tensor(np.ones(shape, dtype=dtype))
