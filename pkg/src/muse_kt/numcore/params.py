"""Named parameter collections shared by the models and the optimizers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


class Parameter:
    """A named trainable tensor plus its weight-decay group membership."""

    __slots__ = ("name", "tensor", "decay")

    def __init__(self, name: str, value: np.ndarray, decay: bool = True):
        self.name = name
        self.tensor = Tensor(np.asarray(value), requires_grad=True)
        self.decay = decay

    @property
    def t(self) -> Tensor:
        return self.tensor

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = value

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.tensor.shape})"


class ParamStore:
    """Ordered, uniquely named parameters for one model."""

    def __init__(self, prefix: str = ""):
        self.prefix = prefix
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, decay: bool = True) -> Parameter:
        full = f"{self.prefix}{name}" if self.prefix else name
        if full in self._params:
            raise ValueError(f"duplicate parameter name: {full}")
        p = Parameter(full, value, decay=decay)
        self._params[full] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.tensor.grad = None

    def groups(self) -> dict[str, list[Parameter]]:
        """Exactly two disjoint optimizer groups: decayed and non-decayed."""
        out: dict[str, list[Parameter]] = {"decay": [], "no_decay": []}
        for p in self._params.values():
            out["decay" if p.decay else "no_decay"].append(p)
        return out

    def n_elements(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in self._params.items():
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.tensor.data = arr.astype(p.data.dtype, copy=True)
            p.tensor.grad = None


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def normal_init(rng: np.random.Generator, shape: tuple[int, ...], scale: float, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * scale).astype(dtype)


def zeros_init(shape: tuple[int, ...], dtype) -> np.ndarray:
    return np.zeros(shape, dtype=dtype)


def ones_init(shape: tuple[int, ...], dtype) -> np.ndarray:
    return np.ones(shape, dtype=dtype)
