"""SGD and Adam updates over a :class:`ParameterStore`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .params import ParameterStore


class MissingGradientError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # Adam bias correction counts updates per parameter: task heads are
    # only touched on their own task's steps.
    t: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer kind must be 'sgd' or 'adam', got {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def optimizer_step(
    store: ParameterStore,
    state: OptimizerState,
    names: Iterable[str] | None = None,
) -> ParameterStore:
    """Apply one update to ``names`` (default: every parameter) and clear their grads.

    Raises
    ------
    MissingGradientError
        If any selected parameter has no gradient.
    """
    selected = sorted(names) if names is not None else store.names()
    for name in selected:
        if store[name].grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
    lr = state.learning_rate
    for name in selected:
        p = store[name]
        g = p.grad
        if state.kind == "sgd":
            p.data -= lr * g
        else:
            m = state.m.get(name)
            if m is None:
                m = state.m[name] = np.zeros_like(p.data)
                state.v[name] = np.zeros_like(p.data)
            v = state.v[name]
            t = state.t.get(name, 0) + 1
            state.t[name] = t
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1**t)
            v_hat = v / (1.0 - state.beta2**t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = None
    state.step += 1
    return store


def clip_gradients(store: ParameterStore, names: Iterable[str], max_norm: float) -> float:
    """Scale the gradients of ``names`` so their joint L2 norm is at most
    ``max_norm``; returns the norm before scaling."""
    grads = [store[n].grad for n in names if store[n].grad is not None]
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
