"""Embedding, multi-channel convolution, peephole LSTM, bi-LSTM and attention pooling.

Sequence tensors are batch-major ``(B, s, width)``; a boolean ``mask`` of
shape ``(B, s)`` marks the real (unpadded) positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import ModuleType

import numpy as np

from . import kernels
from .params import ParameterStore
from .tensor import (
    ShapeError,
    Tensor,
    _make,
    add,
    concat_last,
    embedding_lookup,
    flip_time,
    matmul,
    mul,
    relu,
    rowwise_dot,
    sigmoid,
    slice_last,
    softmax,
    tanh,
    unfold,
    weighted_sum,
)

PAD_ID = 0
UNK_ID = 1


@dataclass
class ConvLayer:
    """``channels`` kernels spanning ``kernel_size`` rows of a ``dim``-wide input.

    The kernels live in one ``(kernel_size * dim, channels)`` matrix so the
    whole feature map is a single product with the unfolded input.
    """

    kernel_size: int
    dim: int
    channels: int
    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, kernel_size: int, dim: int, channels: int) -> "ConvLayer":
        if kernel_size < 1 or channels < 1 or dim < 1:
            raise ValueError("kernel_size, dim and channels must be positive")
        w = store.create(f"{prefix}.kernel", (kernel_size * dim, channels))
        b = store.create(f"{prefix}.bias", (channels,), init="zeros")
        return cls(kernel_size, dim, channels, w, b)

    @property
    def kernels(self) -> list[np.ndarray]:
        """The individual ``(kernel_size, dim)`` kernels, one per channel."""
        w = self.weight.data.reshape(self.kernel_size, self.dim, self.channels)
        return [w[:, :, j] for j in range(self.channels)]


@dataclass
class LstmParams:
    """Peephole LSTM weights.

    ``w_x`` is ``(input_dim, 4h)`` and ``w_h`` is ``(h, 4h)`` with gate blocks
    ordered input, forget, output, candidate.  ``peep`` rows are the diagonal
    cell-to-gate weights for the input, forget and output gates.
    """

    input_dim: int
    hidden_dim: int
    w_x: Tensor
    w_h: Tensor
    b: Tensor
    peep: Tensor

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int) -> "LstmParams":
        if input_dim < 1 or hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be positive")
        h = hidden_dim
        return cls(
            input_dim,
            hidden_dim,
            store.create(f"{prefix}.W_x", (input_dim, 4 * h)),
            store.create(f"{prefix}.W_h", (h, 4 * h)),
            store.create(f"{prefix}.b", (4 * h,), init="zeros"),
            store.create(f"{prefix}.W_c", (3, h)),
        )

    def tensors(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.w_x, self.w_h, self.b, self.peep


# ---------------------------------------------------------------- embedding


def embed(char_ids, embeddings: Tensor) -> Tensor:
    """Look up ``(s, d)`` rows for one text.

    Out-of-range ids map to the UNK row; an empty text yields one PAD row.
    """
    ids = np.asarray(list(char_ids), dtype=np.intp)
    if ids.size == 0:
        ids = np.array([PAD_ID], dtype=np.intp)
    V = embeddings.shape[0]
    ids = np.where((ids < 0) | (ids >= V), UNK_ID, ids)
    return embedding_lookup(embeddings, ids)


def embed_batch(ids: np.ndarray, embeddings: Tensor) -> Tensor:
    """(B, s) padded ids -> (B, s, d)."""
    ids = np.asarray(ids, dtype=np.intp)
    V = embeddings.shape[0]
    ids = np.where((ids < 0) | (ids >= V), UNK_ID, ids)
    return embedding_lookup(embeddings, ids)


# ---------------------------------------------------------------- convolution


def conv_multichannel(x: Tensor, layer: ConvLayer) -> Tensor:
    """ReLU valid convolution: ``(s, d) -> (s-k+1, c)`` or batched ``(B, s, d)``."""
    single = x.data.ndim == 2
    if single:
        x = _add_batch(x)
    if x.data.ndim != 3 or x.shape[2] != layer.dim:
        raise ShapeError(f"conv expects (..., s, {layer.dim}) input, got {x.shape}")
    if x.shape[1] < layer.kernel_size:
        raise ShapeError(
            f"sequence length {x.shape[1]} is shorter than kernel size {layer.kernel_size}; "
            f"pad the input to at least {layer.kernel_size} rows"
        )
    out = relu(add(matmul(unfold(x, layer.kernel_size), layer.weight), layer.bias))
    if single:
        return _drop_batch(out)
    return out


def _drop_batch(x: Tensor) -> Tensor:
    return _make(x.data[0].copy(), (x,), lambda g: (g[None],))


# ---------------------------------------------------------------- LSTM


def lstm_step(x_t, h_prev, c_prev, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One peephole LSTM step built from elementary tensor ops.

    Works on vectors ``(in,)`` or row batches ``(B, in)``.
    """
    x_t, h_prev, c_prev = (v if isinstance(v, Tensor) else Tensor(v) for v in (x_t, h_prev, c_prev))
    H = p.hidden_dim
    if x_t.shape[-1] != p.input_dim or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError(
            f"lstm_step expects x[{p.input_dim}], h[{H}], c[{H}]; "
            f"got {x_t.shape}, {h_prev.shape}, {c_prev.shape}"
        )
    z = add(add(matmul(x_t, p.w_x), matmul(h_prev, p.w_h)), p.b)
    lead = x_t.shape[:-1]

    def peep_row(r):
        row = _peep_row(p.peep, r)
        return _tile_rows(row, lead) if lead else row

    i = sigmoid(add(slice_last(z, 0, H), mul(peep_row(0), c_prev)))
    f = sigmoid(add(slice_last(z, H, 2 * H), mul(peep_row(1), c_prev)))
    g = tanh(slice_last(z, 3 * H, 4 * H))
    c_t = add(mul(f, c_prev), mul(i, g))
    o = sigmoid(add(slice_last(z, 2 * H, 3 * H), mul(peep_row(2), c_t)))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


def _peep_row(peep: Tensor, r: int) -> Tensor:
    shape = peep.shape

    def backward(g):
        gp = np.zeros(shape)
        gp[r] = g
        return (gp,)

    return _make(peep.data[r].copy(), (peep,), backward)


def _tile_rows(v: Tensor, lead: tuple[int, ...]) -> Tensor:
    n = int(np.prod(lead))
    return _make(
        np.broadcast_to(v.data, lead + v.shape).copy(),
        (v,),
        lambda g: (g.reshape(n, -1).sum(axis=0),),
    )


def lstm_sequence(
    x: Tensor,
    p: LstmParams,
    mask: np.ndarray | None = None,
    backend: ModuleType | None = None,
) -> Tensor:
    """Run the LSTM over a ``(B, s, in)`` batch, returning all hidden states ``(B, s, h)``.

    Padded positions (``mask`` False) carry the previous state forward, so
    the last row always holds the state at each sequence's final real step.
    """
    kern = backend if backend is not None else kernels.active
    if x.data.ndim != 3 or x.shape[2] != p.input_dim:
        raise ShapeError(f"lstm_sequence expects (B, s, {p.input_dim}), got {x.shape}")
    B, S, _ = x.shape
    if S == 0:
        raise ShapeError("cannot run an LSTM over an empty sequence")
    if mask is None:
        mask = np.ones((B, S), dtype=bool)
    m_tm = np.ascontiguousarray(np.asarray(mask, dtype=np.float64).T)
    X = x.data
    Wx, Wh, b, peep = p.w_x.data, p.w_h.data, p.b.data, p.peep.data
    xw = np.ascontiguousarray((X @ Wx + b).transpose(1, 0, 2))
    hs, cs, gates = kern.lstm_forward(xw, Wh, peep, m_tm)
    out = np.ascontiguousarray(hs.transpose(1, 0, 2))

    def backward(g):
        dhs = np.ascontiguousarray(g.transpose(1, 0, 2))
        dxw_tm, dwh, dpeep = kern.lstm_backward(dhs, hs, cs, gates, Wh, peep, m_tm)
        dxw = dxw_tm.transpose(1, 0, 2)
        d2 = dxw.reshape(-1, dxw.shape[-1])
        dX = dxw @ Wx.T
        dWx = X.reshape(-1, X.shape[-1]).T @ d2
        db = d2.sum(axis=0)
        return dX, dWx, dwh, db, dpeep

    return _make(out, (x, p.w_x, p.w_h, p.b, p.peep), backward)


def reverse_padded(x: Tensor, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Time-reverse a right-padded batch (padding moves to the front)."""
    return flip_time(x), np.asarray(mask)[:, ::-1]


def bilstm(
    x: Tensor,
    fwd: LstmParams,
    bwd: LstmParams,
    mask: np.ndarray | None = None,
    backend: ModuleType | None = None,
) -> Tensor:
    """Concatenate forward and backward LSTM states: ``(B, s, in) -> (B, s, 2h)``.

    A 2-D ``(s, in)`` input is treated as a batch of one and returned 2-D.
    """
    if fwd.hidden_dim != bwd.hidden_dim:
        raise ShapeError("forward and backward LSTMs must share hidden_dim")
    single = x.data.ndim == 2
    if single:
        x = _add_batch(x)
        mask = None if mask is None else np.asarray(mask)[None]
    if x.shape[1] == 0:
        raise ShapeError("cannot run a bi-LSTM over an empty sequence")
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=bool)
    front = lstm_sequence(x, fwd, mask, backend)
    xr, mr = reverse_padded(x, mask)
    back = flip_time(lstm_sequence(xr, bwd, mr, backend))
    out = concat_last(front, back)
    return _drop_batch(out) if single else out


def _add_batch(x: Tensor) -> Tensor:
    return _make(x.data[None].copy(), (x,), lambda g: (g[0],))


# ---------------------------------------------------------------- attention


def attention_pool(states: Tensor, v: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Dot-product attention of query ``v`` over ``states``.

    ``alpha_t = softmax_t(v . h_t)`` with padded positions excluded, and the
    summary is ``sum_t alpha_t h_t``.  Accepts ``(s, h)``/``(h,)`` or the
    batched ``(B, s, h)``/``(B, h)``.
    """
    single = states.data.ndim == 2
    if single:
        states = _add_batch(states)
        v = _add_batch(v)
        mask = None if mask is None else np.asarray(mask)[None]
    if states.shape[1] == 0:
        raise ShapeError("attention over a zero-length sequence")
    if v.shape[-1] != states.shape[-1]:
        raise ShapeError(f"query width {v.shape[-1]} != state width {states.shape[-1]}")
    alpha = softmax(rowwise_dot(states, v), mask=mask)
    summary = weighted_sum(alpha, states)
    if single:
        return _drop_batch(alpha), _drop_batch(summary)
    return alpha, summary
