"""Dense-tensor substrate with reverse-mode automatic differentiation.

A dynamic tape: each forward op builds a node closure that knows how to push
gradients to its parents. Values are float32 by default; float64 is available
for high-precision gradient checking. Ops are batch-aware (leading dimensions
broadcast where numpy's matmul/elementwise semantics allow).
"""

from __future__ import annotations

import contextlib
import math
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_CHECKED = False


@contextlib.contextmanager
def checked_mode(enabled: bool = True):
    """Within the context, every op output is checked for NaN/Inf."""
    global _CHECKED
    prev = _CHECKED
    _CHECKED = enabled
    try:
        yield
    finally:
        _CHECKED = prev


def _check(arr: np.ndarray, opname: str) -> None:
    if _CHECKED and not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values produced by op {opname!r}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # light operator sugar; the functional ops below are the real surface
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
    return Tensor(arr)


def _result(data, opname, parents, backward) -> Tensor:
    _check(data, opname)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (), backward=backward if needs else None)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach grad.shape from shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _result(out_data, "add", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _result(out_data, "mul", (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ValueError(f"matmul needs at least 1-d @ 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.shape))

    return _result(out_data, "matmul", (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        splits = np.cumsum(sizes)[:-1]
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate_grad(piece)

    return _result(out_data, "concat", tuple(tensors), backward)


def take_slice(x: Tensor, key) -> Tensor:
    """Basic slicing (slices / ints in a tuple); gradient scatters back."""
    x = as_tensor(x)
    out_data = x.data[key]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[key] = g
            x.accumulate_grad(gx)

    return _result(np.ascontiguousarray(out_data), "slice", (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    return _result(out_data, "reshape", (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = np.transpose(x.data, axes)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.transpose(g, inv))

    return _result(out_data, "transpose", (x,), backward)


def sum_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.shape))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            x.accumulate_grad(np.broadcast_to(g, x.shape))

    return _result(out_data, "sum", (x,), backward)


def mean_reduce(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        denom = x.data.size
    else:
        denom = x.shape[axis]

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g / denom, x.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x.accumulate_grad(np.broadcast_to(gg / denom, x.shape))

    return _result(out_data, "mean", (x,), backward)


def _segment_sum(values: np.ndarray, idx: np.ndarray, num_segments: int) -> np.ndarray:
    """Sum values (..., k, d) into (..., num_segments, d) by the axis=-2 index."""
    k = idx.shape[0]
    out_shape = values.shape[:-2] + (num_segments, values.shape[-1])
    out = np.zeros(out_shape, dtype=values.dtype)
    if k == 0:
        return out
    if np.all(idx[1:] >= idx[:-1]):
        sorted_idx, sorted_vals = idx, values
    else:
        order = np.argsort(idx, kind="stable")
        sorted_idx = idx[order]
        sorted_vals = np.take(values, order, axis=-2)
    boundaries = np.flatnonzero(np.concatenate(([True], sorted_idx[1:] != sorted_idx[:-1])))
    sums = np.add.reduceat(sorted_vals, boundaries, axis=-2)
    out[..., sorted_idx[boundaries], :] = sums
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    """Take rows along axis -2: x (..., n, d), idx (k,) -> (..., k, d)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[-2]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"gather index out of range for axis of size {n}")
    out_data = np.take(x.data, idx, axis=-2)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_segment_sum(g, idx, n))

    return _result(out_data, "gather_rows", (x,), backward)


def scatter_mean(values: Tensor, idx, num_segments: int) -> Tensor:
    """Mean values (..., k, d) into (..., num_segments, d) rows by index.

    Segments with no contribution stay zero.
    """
    values = as_tensor(values)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= num_segments):
        raise ValueError(f"scatter index out of range for {num_segments} segments")
    counts = np.bincount(idx, minlength=num_segments).astype(values.dtype)
    safe = np.maximum(counts, 1.0)
    out_data = _segment_sum(values.data, idx, num_segments) / safe[:, None]

    def backward(g):
        if values.requires_grad:
            gv = np.take(g / safe[:, None], idx, axis=-2)
            values.accumulate_grad(gv)

    return _result(out_data, "scatter_mean", (values,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * (v * v * v))
    t = np.tanh(inner)
    out_data = 0.5 * v * (1.0 + t)

    def backward(g):
        if x.requires_grad:
            sech2 = 1.0 - t * t
            du = _GELU_C * (1.0 + 3.0 * 0.044715 * (v * v))
            x.accumulate_grad(g * (0.5 * (1.0 + t) + 0.5 * v * sech2 * du))

    return _result(out_data, "gelu", (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            x.accumulate_grad(out_data * (g - dot))

    return _result(out_data, "softmax", (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain.accumulate_grad(_unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            bias.accumulate_grad(_unbroadcast(g, bias.shape))
        if x.requires_grad:
            gh = g * gain.data
            term1 = gh
            term2 = gh.mean(axis=-1, keepdims=True)
            term3 = xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(inv * (term1 - term2 - term3))

    return _result(out_data, "layer_norm", (x, gain, bias), backward)


def sinusoidal_embed(t, dim: int, max_period: float = 10000.0, dtype=DEFAULT_DTYPE) -> Tensor:
    """Constant sin/cos timestep embedding; (dim,) for a scalar t, (B, dim) for a vector."""
    if dim % 2:
        raise ValueError("embedding dimension must be even")
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)[:, None]
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)[None, :]
    ang = t_arr * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1).astype(dtype)
    return Tensor(emb[0] if scalar else emb)


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into .grad slots."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        bw = node._backward
        if bw is None:
            continue  # leaf: keep accumulated grad
        if node.grad is not None:
            bw(node.grad)
        # interior node fully consumed: release tape links and grad
        node._backward = None
        node._parents = ()
        node.grad = None
