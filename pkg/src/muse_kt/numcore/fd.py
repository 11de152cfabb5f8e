"""Central finite differences: the independent oracle for every backward pass.

Only forward evaluations are used here; nothing in this module touches the
tape, so analytic gradients and these estimates stay two separate routes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

DEFAULT_STEP = 1e-5


def fd_gradient(
    forward: Callable[[], float],
    wrt: Tensor,
    step: float = DEFAULT_STEP,
    indices: Sequence[tuple] | None = None,
) -> np.ndarray:
    """Estimate d(forward)/d(wrt) entrywise by central differences.

    ``indices`` restricts the estimate to a subset of entries (the rest come
    back as nan); large parameter tensors are spot-checked that way.
    """
    flat_view = wrt.data.reshape(-1)
    if indices is None:
        picked = [np.unravel_index(i, wrt.data.shape) for i in range(wrt.data.size)]
    else:
        picked = list(indices)
    grad = np.full(wrt.data.shape, np.nan)
    for idx in picked:
        original = wrt.data[idx]
        wrt.data[idx] = original + step
        up = forward()
        wrt.data[idx] = original - step
        down = forward()
        wrt.data[idx] = original
        grad[idx] = (up - down) / (2.0 * step)
    del flat_view
    return grad


def sample_indices(shape: tuple[int, ...], rng: np.random.Generator, max_entries: int) -> list[tuple]:
    """A deterministic entry subset for spot-checking big tensors."""
    size = int(np.prod(shape)) if shape else 1
    if size <= max_entries:
        flat = np.arange(size)
    else:
        flat = rng.choice(size, size=max_entries, replace=False)
    return [np.unravel_index(int(i), shape) for i in np.sort(flat)]


def max_relative_error(
    analytic: np.ndarray,
    numeric: np.ndarray,
    absolute_floor: float = 1e-8,
) -> float:
    """Worst-case relative disagreement, ignoring entries not estimated (nan)."""
    mask = ~np.isnan(numeric)
    if not mask.any():
        return 0.0
    a = np.asarray(analytic, dtype=np.float64)[mask]
    n = numeric[mask]
    diff = np.abs(a - n)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-300)
    rel = np.where(diff <= absolute_floor, 0.0, diff / scale)
    return float(rel.max())
