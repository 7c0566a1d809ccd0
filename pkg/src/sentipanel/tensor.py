"""Dense float64 tensors with tape-based reverse-mode gradients.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure that pushes the output gradient back to them.  ``Tensor.backward``
walks the graph in reverse topological order.  Only the shapes the model
needs are supported: no general broadcasting.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A float64 array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | float | None = None) -> None:
        """Propagate ``grad`` (default: ones, for a scalar) to all ancestors."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
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
        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            node._backward(g, pending)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _push(pending: dict, node: Tensor, g: np.ndarray) -> None:
    key = id(node)
    if key in pending:
        pending[key] = pending[key] + g
    else:
        pending[key] = g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data, parents)

    def run(g, pending):
        for parent, pg in zip(parents, backward(g)):
            if pg is not None:
                _push(pending, parent, pg)

    out._backward = run
    return out


# ---------------------------------------------------------------- arithmetic


def matmul(a, b) -> Tensor:
    """Matrix product; ``a`` may carry leading batch axes, ``b`` is 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 1:
        raise ShapeError(f"matmul expects (..., k) @ (k, n), got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        ga = g @ B.T
        a2 = A.reshape(-1, A.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gb = a2.T @ g2
        return ga, gb

    return _make(A @ B, (a, b), backward)


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may also be a vector matching the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    if b.data.ndim == 1 and a.shape[-1:] == b.shape:
        return _make(
            a.data + b.data,
            (a, b),
            lambda g: (g, g.reshape(-1, g.shape[-1]).sum(axis=0)),
        )
    raise ShapeError(f"add cannot combine {a.shape} and {b.shape}")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    shape = a.shape
    return _make(a.data.sum(), (a,), lambda g: (np.full(shape, float(g)),))


def square(a: Tensor) -> Tensor:
    A = a.data
    return _make(A * A, (a,), lambda g: (2.0 * A * g,))


# ---------------------------------------------------------------- nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def _softmax(x: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, stabilised by max subtraction.

    Positions where ``mask`` is False get probability exactly 0.
    """
    logits = as_tensor(logits)
    if logits.data.ndim == 0 or logits.shape[-1] == 0:
        raise ShapeError("softmax of an empty vector")
    if mask is not None and not np.all(np.any(mask, axis=-1)):
        raise ShapeError("softmax mask leaves a row with no valid entries")
    p = _softmax(logits.data, mask)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=-1, keepdims=True)),)

    return _make(p, (logits,), backward)


def cross_entropy(pred, true_class: int) -> Tensor:
    """``-ln pred[true_class]`` for a probability vector, floored at 1e-12."""
    pred = as_tensor(pred)
    n = pred.shape[-1] if pred.data.ndim else 0
    if pred.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a vector, got {pred.shape}")
    if not 0 <= true_class < n:
        raise IndexError(f"class index {true_class} outside 0..{n - 1}")
    p = max(float(pred.data[true_class]), PROB_FLOOR)

    def backward(g):
        gp = np.zeros(n)
        if pred.data[true_class] >= PROB_FLOOR:
            gp[true_class] = -float(g) / p
        return (gp,)

    return _make(-np.log(p), (pred,), backward)


def softmax_cross_entropy(logits, targets: Sequence[int]) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy of ``softmax(logits)`` against integer targets.

    Fused so the gradient is exactly ``(p - onehot) / batch``.  Returns the
    loss tensor and the probability matrix.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"expected (batch, classes) logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.intp)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeError("one target per row required")
    if np.any((targets < 0) | (targets >= k)):
        raise IndexError(f"target outside 0..{k - 1}")
    p = _softmax(logits.data, None)
    picked = np.maximum(p[np.arange(n), targets], PROB_FLOOR)
    loss = -np.mean(np.log(picked))

    def backward(g):
        d = p.copy()
        d[np.arange(n), targets] -= 1.0
        return (d * (float(g) / n),)

    return _make(loss, (logits,), backward), p


# ---------------------------------------------------------------- indexing


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a (V, d) table for an integer index array."""
    ids = np.asarray(ids, dtype=np.intp)
    V, d = table.shape
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"embedding index outside 0..{V - 1}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, d))
        return (gt,)

    return _make(table.data[ids], (table,), backward)


def unfold(x: Tensor, k: int) -> Tensor:
    """Sliding windows of ``k`` rows: (B, s, d) -> (B, s-k+1, k*d)."""
    B, s, d = x.shape
    if s < k:
        raise ShapeError(f"sequence length {s} shorter than kernel {k}; pad to at least {k}")
    n = s - k + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)  # (B, n, d, k)
    out = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B, n, k * d)

    def backward(g):
        gx = np.zeros_like(x.data)
        g4 = g.reshape(B, n, k, d)
        for j in range(k):
            gx[:, j : j + n, :] += g4[:, :, j, :]
        return (gx,)

    return _make(out, (x,), backward)


def flip_time(x: Tensor) -> Tensor:
    """Reverse axis 1."""
    return _make(x.data[:, ::-1].copy(), (x,), lambda g: (g[:, ::-1].copy(),))


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat needs matching leading axes: {a.shape} vs {b.shape}")
    na = a.shape[-1]
    return _make(
        np.concatenate([a.data, b.data], axis=-1),
        (a, b),
        lambda g: (g[..., :na].copy(), g[..., na:].copy()),
    )


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def backward(g):
        ga = np.zeros(shape)
        ga[..., start:stop] = g
        return (ga,)

    return _make(a.data[..., start:stop].copy(), (a,), backward)


def select_step(x: Tensor, t: int) -> Tensor:
    """``x[:, t, :]`` from a (B, s, h) tensor."""
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape)
        gx[:, t, :] = g
        return (gx,)

    return _make(x.data[:, t, :].copy(), (x,), backward)


def rowwise_dot(states: Tensor, query: Tensor) -> Tensor:
    """(B, s, h) . (B, h) -> (B, s) scores."""
    H, v = states.data, query.data
    if H.shape[0] != v.shape[0] or H.shape[2] != v.shape[1]:
        raise ShapeError(f"cannot score {states.shape} against {query.shape}")
    out = np.einsum("bsh,bh->bs", H, v)
    return _make(
        out,
        (states, query),
        lambda g: (g[:, :, None] * v[:, None, :], np.einsum("bs,bsh->bh", g, H)),
    )


def weighted_sum(weights: Tensor, states: Tensor) -> Tensor:
    """(B, s) weights over (B, s, h) states -> (B, h)."""
    a, H = weights.data, states.data
    out = np.einsum("bs,bsh->bh", a, H)
    return _make(
        out,
        (weights, states),
        lambda g: (np.einsum("bh,bsh->bs", g, H), a[:, :, None] * g[:, None, :]),
    )

