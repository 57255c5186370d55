"""Minimal dense tensor algebra with reverse-mode autodiff.

Define-by-run: every op records its inputs and a backward closure on the
result tensor; the tape is rebuilt on each forward pass. float32 is the
working precision, float64 is used for gradient checks.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericsError, ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_finite_checks = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def finite_checks(enabled: bool):
    """Toggle the NaN/Inf guard on op outputs (on by default)."""
    global _finite_checks
    prev = _finite_checks
    _finite_checks = enabled
    try:
        yield
    finally:
        _finite_checks = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flags})"

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def astype(self, dtype) -> Tensor:
        out = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        return out

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar; scalars are wrapped as constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other, self.dtype))

    def backward(self) -> None:
        """Backpropagate from a scalar loss; accumulates into .grad."""
        if self.shape != (1,):
            raise ShapeError(f"backward() needs shape (1,), got {self.shape}")

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
                if id(p) not in seen:
                    stack.append((p, False))

        # transient grads keyed by id so repeated backward calls only
        # accumulate into leaf .grad, never double-count internals
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._grad_fn is None:
                continue
            parent_grads = node._grad_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE))


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _record(out_data: np.ndarray, parents: tuple[Tensor, ...], grad_fn, op: str) -> Tensor:
    if _finite_checks and not np.all(np.isfinite(out_data)):
        raise NumericsError(f"non-finite output from op '{op}'")
    out = Tensor(out_data)
    if _grad_enabled and any(p.requires_grad or p._grad_fn is not None for p in parents):
        out._parents = parents
        out._grad_fn = grad_fn
    return out


# ---------------------------------------------------------------- ops

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from e

    def grad_fn(g):
        return _sum_to(g, a.shape), _sum_to(g, b.shape)

    return _record(out, (a, b), grad_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from e

    def grad_fn(g):
        return _sum_to(g, a.shape), _sum_to(-g, b.shape)

    return _record(out, (a, b), grad_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from e

    def grad_fn(g):
        return _sum_to(g * b.data, a.shape), _sum_to(g * a.data, b.shape)

    return _record(out, (a, b), grad_fn, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-d or stacked matmul; leading batch dims must match exactly."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dims differ: {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _record(out, (a, b), grad_fn, "matmul")


def softmax_lastdim(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _record(y, (x,), grad_fn, "softmax_lastdim")


def layer_norm_affine(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def grad_fn(g):
        gxhat = g * gamma.data
        gmean = gxhat.mean(axis=-1, keepdims=True)
        gdot = (gxhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxhat - gmean - xhat * gdot)
        axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _record(out, (x, gamma, beta), grad_fn, "layer_norm_affine")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def grad_fn(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return _record(out.astype(x.dtype, copy=False), (x,), grad_fn, "gelu")


def mean_over_axes(x: Tensor, axes, keepdims: bool = False) -> Tensor:
    axes = tuple(a % x.ndim for a in axes)
    out = x.data.mean(axis=axes, keepdims=keepdims)
    if out.ndim == 0:
        out = out.reshape(1)
    count = math.prod(x.shape[a] for a in axes)
    kept = tuple(1 if a in axes else s for a, s in enumerate(x.shape))

    def grad_fn(g):
        return (np.broadcast_to(g.reshape(kept) / count, x.shape),)

    return _record(out, (x,), grad_fn, "mean_over_axes")


def concat_axis(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat_axis of empty list")
    axis = axis % tensors[0].ndim
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from e
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), grad_fn, "concat_axis")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % x.ndim
    if not (0 <= start <= stop <= x.shape[axis]):
        raise ShapeError(f"slice [{start}:{stop}] out of range on axis {axis} of {x.shape}")
    idx = tuple(slice(start, stop) if a == axis else slice(None) for a in range(x.ndim))
    out = x.data[idx]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _record(out.copy(), (x,), grad_fn, "slice_axis")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as e:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from e

    def grad_fn(g):
        return (_sum_to(g, x.shape),)

    return _record(out.copy(), (x,), grad_fn, "broadcast_to")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from e

    def grad_fn(g):
        return (g.reshape(x.shape),)

    return _record(out, (x,), grad_fn, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose axes {axes} invalid for ndim {x.ndim}")
    out = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inverse),)

    return _record(out, (x,), grad_fn, "transpose")


def sinusoidal_embed(t: Tensor, dim: int, max_period: float = 10000.0) -> Tensor:
    """Map a vector of real-valued levels [N] to embeddings [N, dim]."""
    if t.ndim != 1:
        raise ShapeError(f"sinusoidal_embed expects a 1-d input, got {t.shape}")
    if dim % 2 != 0:
        raise ShapeError("sinusoidal_embed dim must be even")
    half = dim // 2
    freqs = np.exp(
        -math.log(max_period) * np.arange(half, dtype=t.dtype) / half
    )
    args = t.data[:, None] * freqs[None, :]
    out = np.concatenate([np.sin(args), np.cos(args)], axis=-1)

    def grad_fn(g):
        dsin = np.cos(args) * freqs[None, :]
        dcos = -np.sin(args) * freqs[None, :]
        return ((g[:, :half] * dsin + g[:, half:] * dcos).sum(axis=-1),)

    return _record(out.astype(t.dtype, copy=False), (t,), grad_fn, "sinusoidal_embed")


_OPS = {
    "add": add,
    "mul": mul,
    "matmul": matmul,
    "softmax_lastdim": softmax_lastdim,
    "layer_norm_affine": layer_norm_affine,
    "gelu": gelu,
    "mean_over_axes": mean_over_axes,
    "concat_axis": concat_axis,
    "slice_axis": slice_axis,
    "broadcast_to": broadcast_to,
    "sinusoidal_embed": sinusoidal_embed,
    # conveniences beyond the core set
    "sub": sub,
    "reshape": reshape,
    "transpose": transpose,
}


def apply(op_kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Dispatch an op by name over a list of input tensors."""
    if op_kind not in _OPS:
        raise ConfigError(f"unknown op kind: {op_kind!r}")
    fn = _OPS[op_kind]
    attrs = attrs or {}
    if op_kind == "concat_axis":
        return fn(list(inputs), **attrs)
    return fn(*inputs, **attrs)
