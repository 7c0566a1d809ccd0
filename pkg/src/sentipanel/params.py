"""Named, seeded parameter collections."""

from __future__ import annotations

import zlib
from typing import Iterator

import numpy as np

from .tensor import Tensor


def glorot_bound(shape: tuple[int, ...]) -> float:
    if len(shape) >= 2:
        fan_in, fan_out = shape[0], shape[-1]
    else:
        fan_in = fan_out = shape[0]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


class ParameterStore:
    """Map from a stable dotted name to a trainable :class:`Tensor`.

    Iteration is always in sorted-name order.  Each parameter draws from its
    own generator seeded by ``(seed, crc32(name))``, so the values of one
    parameter do not depend on which other parameters exist or the order in
    which they were created.
    """

    def __init__(self, seed: int = 0):
        if seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(seed)
        self._params: dict[str, Tensor] = {}

    def rng_for(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])

    def create(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        shape = tuple(int(n) for n in shape)
        if init == "glorot":
            bound = glorot_bound(shape)
            data = self.rng_for(name).uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        return self.add(name, data)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(data, dtype=np.float64, copy=True), name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._params if n.startswith(prefix))

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._params[n]) for n in self.names()]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}
