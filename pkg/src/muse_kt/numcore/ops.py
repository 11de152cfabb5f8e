"""Neural-net building blocks composed from taped tensor primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    IndexOutOfRangeError,
    ShapeMismatchError,
    Tensor,
    _accumulate,
    _make,
    concat,
    gelu,
    sigmoid,
    softmax,
)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w
    if b is not None:
        out = out + b
    return out


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer position-wise MLP with a smooth nonlinearity."""
    return linear(gelu(linear(x, w1, b1)), w2, b2)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis, then apply the learned affine map."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    normed = centered * ((var + eps) ** -0.5)
    return normed * gain + bias


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds only into looked-up rows."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexOutOfRangeError(
            f"id outside vocabulary of size {table.shape[0]} "
            f"(range {ids.min()}..{ids.max()})"
        )
    out = _make(table.data[ids], (table,))
    if out.requires_grad:
        def backward(g, t=table, ids=ids):
            full = np.zeros_like(t.data)
            np.add.at(full, ids, g)
            _accumulate(t, full)
        out._backward = backward
    return out


def continuous_embed(values: np.ndarray, w: Tensor) -> Tensor:
    """Scale a learned vector by a normalized scalar feature: out = x * w."""
    vals = np.asarray(values, dtype=w.dtype)
    return Tensor(vals[..., None]) * w


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted-scaling dropout; p = 0 (and inference) is an exact no-op."""
    if p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout with p > 0 requires an explicit rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    return x * Tensor(keep / (1.0 - p))


@dataclass
class AttentionParams:
    """Projection weights for one multi-head attention layer."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: np.ndarray | None,
    n_heads: int,
    p: AttentionParams,
) -> Tensor:
    """Scaled dot-product attention with head split/merge and output projection.

    ``mask`` is additive (0 keeps, -inf removes), broadcastable to the
    per-head score shape [..., L, L]. Weights at masked positions are exactly 0.
    """
    d = q.shape[-1]
    if d % n_heads != 0:
        raise ShapeMismatchError(f"model width {d} not divisible by {n_heads} heads")
    dh = d // n_heads

    def split(x: Tensor) -> Tensor:
        # [..., L, d] -> [..., h, L, dh]
        length = x.shape[-2]
        return x.reshape(*x.shape[:-1], n_heads, dh).swapaxes(-3, -2)

    qh = split(linear(q, p.wq, p.bq))
    kh = split(linear(k, p.wk, p.bk))
    vh = split(linear(v, p.wv, p.bv))

    scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    if mask is not None:
        scores = scores + Tensor(np.asarray(mask, dtype=scores.dtype))
    weights = softmax(scores, axis=-1)
    mixed = weights @ vh
    merged = mixed.swapaxes(-3, -2).reshape(*q.shape[:-1], d)
    return linear(merged, p.wo, p.bo)


@dataclass
class GRUParams:
    """The nine weight blocks of a gated recurrent unit cell."""

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor


def gru_cell(x: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """One GRU step: gated blend of the carried state and a candidate state."""
    z = sigmoid(x @ p.wz + h @ p.uz + p.bz)
    r = sigmoid(x @ p.wr + h @ p.ur + p.br)
    candidate = (x @ p.wh + (r * h) @ p.uh + p.bh).tanh()
    return (1.0 - z) * h + z * candidate


PROB_CLAMP = 1e-7


def bce_loss(p: Tensor, y: np.ndarray | Tensor, weights: np.ndarray | None = None) -> Tensor:
    """Mean binary cross entropy with probability clamping at 1e-7.

    ``weights`` (0/1 validity) selects which positions enter the mean.
    """
    target = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=p.dtype))
    pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    elementwise = -(target * pc.log() + (1.0 - target) * (1.0 - pc).log())
    if weights is None:
        return elementwise.mean()
    w = np.asarray(weights, dtype=p.dtype)
    total = float(w.sum())
    if total <= 0:
        raise ValueError("bce_loss needs at least one weighted position")
    return (elementwise * Tensor(w)).sum() * (1.0 / total)
