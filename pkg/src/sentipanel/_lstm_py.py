"""Pure-numpy peephole LSTM recurrence (fallback for the compiled kernel).

Arrays are time-major.  Gate blocks in the ``4h`` axis are ordered
``[input, forget, output, candidate]``.  ``mask[t, b] == 0`` marks padding:
the state is carried through unchanged and nothing is learned there.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(xw, wh, peep, mask):
    """Run the recurrence given precomputed ``x_t W_x + b``.

    Parameters
    ----------
    xw : (S, B, 4H) array
    wh : (H, 4H) array
    peep : (3, H) array
        Diagonal peephole weights for the input, forget and output gates.
    mask : (S, B) array of 0/1

    Returns
    -------
    hs, cs : (S, B, H) arrays
    gates : (S, B, 4H) array of post-activation gate values
    """
    S, B, G = xw.shape
    H = G // 4
    hs = np.zeros((S, B, H))
    cs = np.zeros((S, B, H))
    gates = np.zeros((S, B, G))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    pi, pf, po = peep[0], peep[1], peep[2]
    for t in range(S):
        z = xw[t] + h @ wh
        i = _sigmoid(z[:, :H] + pi * c)
        f = _sigmoid(z[:, H : 2 * H] + pf * c)
        g = np.tanh(z[:, 3 * H :])
        c_new = f * c + i * g
        o = _sigmoid(z[:, 2 * H : 3 * H] + po * c_new)
        h_new = o * np.tanh(c_new)
        keep = (mask[t] != 0)[:, None]
        h = np.where(keep, h_new, h)
        c = np.where(keep, c_new, c)
        hs[t] = h
        cs[t] = c
        gates[t] = np.where(keep, np.concatenate([i, f, o, g], axis=1), 0.0)
    return hs, cs, gates


def lstm_backward(dhs, hs, cs, gates, wh, peep, mask):
    """Gradients of the recurrence given upstream ``dL/dh_t`` for every step.

    Returns ``(dxw, dwh, dpeep)`` with the shapes of ``xw``, ``wh``, ``peep``.
    """
    S, B, H = hs.shape
    dxw = np.zeros((S, B, 4 * H))
    dwh = np.zeros_like(wh)
    dpeep = np.zeros_like(peep)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    zeros = np.zeros((B, H))
    pi, pf, po = peep[0], peep[1], peep[2]
    for t in range(S - 1, -1, -1):
        keep = (mask[t] != 0)[:, None]
        dh = dhs[t] + dh_next
        dc = dc_next
        h_prev = hs[t - 1] if t > 0 else zeros
        c_prev = cs[t - 1] if t > 0 else zeros
        c_new = cs[t]
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        o = gates[t, :, 2 * H : 3 * H]
        g = gates[t, :, 3 * H :]
        dh_v = np.where(keep, dh, 0.0)
        dc_v = np.where(keep, dc, 0.0)
        tc = np.tanh(c_new)
        do_pre = dh_v * tc * o * (1.0 - o)
        dct = dc_v + dh_v * o * (1.0 - tc * tc) + do_pre * po
        di_pre = dct * g * i * (1.0 - i)
        df_pre = dct * c_prev * f * (1.0 - f)
        dg_pre = dct * i * (1.0 - g * g)
        dpeep[0] += np.sum(di_pre * c_prev, axis=0)
        dpeep[1] += np.sum(df_pre * c_prev, axis=0)
        dpeep[2] += np.sum(do_pre * c_new, axis=0)
        dz = dxw[t]
        dz[:, :H] = di_pre
        dz[:, H : 2 * H] = df_pre
        dz[:, 2 * H : 3 * H] = do_pre
        dz[:, 3 * H :] = dg_pre
        dwh += h_prev.T @ dz
        dc_prev = dct * f + di_pre * pi + df_pre * pf
        dh_next = dz @ wh.T + np.where(keep, 0.0, dh)
        dc_next = np.where(keep, dc_prev, dc)
    return dxw, dwh, dpeep
