"""Central finite-difference gradient checking."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .params import ParameterStore
from .tensor import Tensor

LossFn = Callable[[ParameterStore], Tensor]


def _value(f: LossFn, store: ParameterStore) -> float:
    out = f(store)
    val = float(out.data if isinstance(out, Tensor) else out)
    if not math.isfinite(val):
        raise FloatingPointError(f"loss is not finite: {val}")
    return val


def grad_check_detail(
    f: LossFn,
    store: ParameterStore,
    n_coords: int = 64,
    step: float = 1e-4,
    seed: int = 0,
    names: list[str] | None = None,
) -> dict[str, float]:
    """Per-parameter max relative error between reverse-mode and central differences.

    Up to ``n_coords`` coordinates are sampled from each parameter (all of
    them when the parameter is smaller).  Relative error is
    ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)``.
    """
    store.zero_grad()
    loss = f(store)
    if not math.isfinite(float(loss.data)):
        raise FloatingPointError("loss is not finite")
    loss.backward()
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in store.items()}
    store.zero_grad()

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name in names if names is not None else store.names():
        p = store[name]
        flat = p.data.reshape(-1)
        if flat.size <= n_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=n_coords, replace=False))
        g_ad = analytic[name].reshape(-1)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            up = _value(f, store)
            flat[i] = orig - step
            down = _value(f, store)
            flat[i] = orig
            g_fd = (up - down) / (2.0 * step)
            err = abs(g_ad[i] - g_fd) / max(abs(g_ad[i]), abs(g_fd), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return report


def grad_check(f: LossFn, store: ParameterStore, n_coords: int = 64, step: float = 1e-4, seed: int = 0) -> float:
    """Max relative gradient error over all sampled coordinates of ``store``."""
    detail = grad_check_detail(f, store, n_coords=n_coords, step=step, seed=seed)
    return max(detail.values(), default=0.0)
