"""Numpy-backed tensors with taped reverse-mode gradients.

Every operation records a backward closure; ``Tensor.backward()`` replays the
tape in reverse topological order. Shapes follow numpy broadcasting, and each
backward reduces gradients back to the operand's exact shape.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy import special as _sp


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class IndexOutOfRangeError(IndexError):
    """An integer id falls outside an embedding table's vocabulary."""


class Tensor:
    """A numpy array plus an optional gradient accumulator.

    ``requires_grad`` propagates through operations; tensors built purely from
    constants carry no tape and cost nothing at backward time.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False, _prev: tuple = ()):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw arrays, not Tensors")
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _prev if requires_grad else ()

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A constant view of this tensor's current values (tape is cut)."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # ---------------------------------------------------------------- backward

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of this value into every reachable tensor.

        ``seed`` defaults to ones (the value itself must be scalar in that
        case). Gradients add into ``.grad``; clear parameter grads between
        optimizer steps.
        """
        if not self.requires_grad:
            return
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar value")
            seed = np.ones_like(self.data)
        _accumulate(self, np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(_topo_order(self)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -------------------------------------------------------------- arithmetic

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _make(np.add(self.data, other.data), (self, other))
        if out.requires_grad:
            def backward(g, a=self, b=other):
                _accumulate(a, _unbroadcast(g, a.shape))
                _accumulate(b, _unbroadcast(g, b.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _make(np.subtract(self.data, other.data), (self, other))
        if out.requires_grad:
            def backward(g, a=self, b=other):
                _accumulate(a, _unbroadcast(g, a.shape))
                _accumulate(b, _unbroadcast(-g, b.shape))
            out._backward = backward
        return out

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _make(np.multiply(self.data, other.data), (self, other))
        if out.requires_grad:
            def backward(g, a=self, b=other):
                _accumulate(a, _unbroadcast(g * b.data, a.shape))
                _accumulate(b, _unbroadcast(g * a.data, b.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _make(np.divide(self.data, other.data), (self, other))
        if out.requires_grad:
            def backward(g, a=self, b=other):
                _accumulate(a, _unbroadcast(g / b.data, a.shape))
                _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
            out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        out = _make(-self.data, (self,))
        if out.requires_grad:
            def backward(g, a=self):
                _accumulate(a, -g)
            out._backward = backward
        return out

    def __pow__(self, exponent) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        out = _make(np.power(self.data, exponent), (self,))
        if out.requires_grad:
            def backward(g, a=self, c=float(exponent)):
                _accumulate(a, g * c * np.power(a.data, c - 1.0))
            out._backward = backward
        return out

    def matmul(self, other) -> "Tensor":
        other = self._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ShapeMismatchError("matmul operands must have at least 2 dimensions")
        if self.shape[-1] != other.shape[-2]:
            raise ShapeMismatchError(
                f"matmul inner dimensions differ: {self.shape} @ {other.shape}"
            )
        out = _make(np.matmul(self.data, other.data), (self, other))
        if out.requires_grad:
            def backward(g, a=self, b=other):
                ga = np.matmul(g, b.data.swapaxes(-1, -2))
                gb = np.matmul(a.data.swapaxes(-1, -2), g)
                _accumulate(a, _unbroadcast(ga, a.shape))
                _accumulate(b, _unbroadcast(gb, b.shape))
            out._backward = backward
        return out

    __matmul__ = matmul

    # ------------------------------------------------------------ shape moving

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))
        if out.requires_grad:
            def backward(g, a=self):
                _accumulate(a, g.reshape(a.shape))
            out._backward = backward
        return out

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        out = _make(self.data.swapaxes(axis1, axis2), (self,))
        if out.requires_grad:
            def backward(g, a=self, i=axis1, j=axis2):
                _accumulate(a, g.swapaxes(i, j))
            out._backward = backward
        return out

    def __getitem__(self, index) -> "Tensor":
        out = _make(self.data[index], (self,))
        if out.requires_grad:
            def backward(g, a=self, idx=index):
                full = np.zeros_like(a.data)
                np.add.at(full, idx, g)
                _accumulate(a, full)
            out._backward = backward
        return out

    # ---------------------------------------------------------------- reducers

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def backward(g, a=self, ax=axis, kd=keepdims):
                if ax is not None and not kd:
                    g = np.expand_dims(g, ax)
                _accumulate(a, np.broadcast_to(g, a.shape).astype(a.data.dtype, copy=False))
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # -------------------------------------------------------------- pointwise

    def exp(self) -> "Tensor":
        out = _make(np.exp(self.data), (self,))
        if out.requires_grad:
            def backward(g, a=self, y=out.data):
                _accumulate(a, g * y)
            out._backward = backward
        return out

    def log(self) -> "Tensor":
        out = _make(np.log(self.data), (self,))
        if out.requires_grad:
            def backward(g, a=self):
                _accumulate(a, g / a.data)
            out._backward = backward
        return out

    def tanh(self) -> "Tensor":
        out = _make(np.tanh(self.data), (self,))
        if out.requires_grad:
            def backward(g, a=self, y=out.data):
                _accumulate(a, g * (1.0 - y * y))
            out._backward = backward
        return out

    def clamp(self, lo: float, hi: float) -> "Tensor":
        out = _make(np.clip(self.data, lo, hi), (self,))
        if out.requires_grad:
            def backward(g, a=self, lo=lo, hi=hi):
                inside = (a.data >= lo) & (a.data <= hi)
                _accumulate(a, g * inside)
            out._backward = backward
        return out


# ---------------------------------------------------------------------- helpers


def _make(data: np.ndarray, prev: tuple[Tensor, ...]) -> Tensor:
    requires = any(p.requires_grad for p in prev)
    return Tensor(data, requires_grad=requires, _prev=prev if requires else ())


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order walk (training graphs exceed recursion limits)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


# ------------------------------------------------------------------ factories


def tensor(data, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def zeros(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


# ---------------------------------------------------------------- tensor funcs


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(tensors)
    out = _make(np.concatenate([t.data for t in parts], axis=axis), tuple(parts))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in parts]
        def backward(g, parts=parts, sizes=sizes, ax=axis):
            offsets = np.cumsum([0] + sizes)
            for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                index = [slice(None)] * g.ndim
                index[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(index)])
        out._backward = backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(tensors)
    out = _make(np.stack([t.data for t in parts], axis=axis), tuple(parts))
    if out.requires_grad:
        def backward(g, parts=parts, ax=axis):
            for i, t in enumerate(parts):
                _accumulate(t, np.take(g, i, axis=ax))
        out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-stable softmax; supports additive ``-inf`` masking in ``x``."""
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (x,))
    if out.requires_grad:
        def backward(g, a=x, y=y, ax=axis):
            inner = (g * y).sum(axis=ax, keepdims=True)
            _accumulate(a, (g - inner) * y)
        out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sp.expit(x.data)
    out = _make(y, (x,))
    if out.requires_grad:
        def backward(g, a=x, y=y):
            _accumulate(a, g * y * (1.0 - y))
        out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def relu(x: Tensor) -> Tensor:
    out = _make(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        def backward(g, a=x):
            _accumulate(a, g * (a.data > 0))
        out._backward = backward
    return out


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit (smooth, so finite differences behave)."""
    phi = 0.5 * (1.0 + _sp.erf(x.data * _INV_SQRT2))
    out = _make(x.data * phi, (x,))
    if out.requires_grad:
        def backward(g, a=x, phi=phi):
            density = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
            _accumulate(a, g * (phi + a.data * density))
        out._backward = backward
    return out
