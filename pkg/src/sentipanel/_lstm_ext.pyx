# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled peephole LSTM recurrence.

Same contract as ``sentipanel._lstm_py``: time-major arrays, gate blocks
ordered [input, forget, output, candidate], 0/1 padding mask that carries
state through unchanged.  The per-step ``h @ W_h`` products go through
scipy's BLAS; gate arithmetic runs in plain C loops.
"""

import numpy as np

from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm


# Scalar libm tanh is several times slower than exp; both forms below agree
# with the numpy kernel to rounding and saturate cleanly at +-inf.
cdef inline double _sigm(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


cdef inline double _tanh(double x) nogil:
    return 2.0 / (1.0 + exp(-2.0 * x)) - 1.0


cdef void _gemm_rm(int m, int n, int k, double *a, int lda, double *b, int ldb,
                   double beta, double *c, int ldc, bint trans_a, bint trans_b) nogil:
    # Row-major C(m x n) = op(A) op(B) + beta*C, expressed as the column-major
    # product C^T = op(B)^T op(A)^T.
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &one, b, &ldb, a, &lda, &beta, c, &ldc)


def lstm_forward(xw_in, wh_in, peep_in, mask_in):
    cdef double[:, :, ::1] xw = np.ascontiguousarray(xw_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[:, ::1] peep = np.ascontiguousarray(peep_in, dtype=np.float64)
    cdef double[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.float64)
    cdef Py_ssize_t S = xw.shape[0], B = xw.shape[1], G = xw.shape[2]
    cdef Py_ssize_t H = G // 4
    hs_arr = np.zeros((S, B, H))
    cs_arr = np.zeros((S, B, H))
    gates_arr = np.zeros((S, B, G))
    z_arr = np.zeros((B, G))
    hprev_arr = np.zeros((B, H))
    cprev_arr = np.zeros((B, H))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, ::1] z = z_arr
    cdef double[:, ::1] hp = hprev_arr
    cdef double[:, ::1] cp = cprev_arr
    cdef Py_ssize_t t, b, j
    cdef double i_g, f_g, o_g, g_g, c_new
    if S == 0 or B == 0 or H == 0:
        return hs_arr, cs_arr, gates_arr
    with nogil:
        for t in range(S):
            _gemm_rm(<int>B, <int>G, <int>H, &hp[0, 0], <int>H, &wh[0, 0], <int>G,
                     0.0, &z[0, 0], <int>G, False, False)
            for b in range(B):
                if mask[t, b] != 0.0:
                    for j in range(H):
                        i_g = _sigm(xw[t, b, j] + z[b, j] + peep[0, j] * cp[b, j])
                        f_g = _sigm(xw[t, b, H + j] + z[b, H + j] + peep[1, j] * cp[b, j])
                        g_g = _tanh(xw[t, b, 3 * H + j] + z[b, 3 * H + j])
                        c_new = f_g * cp[b, j] + i_g * g_g
                        o_g = _sigm(xw[t, b, 2 * H + j] + z[b, 2 * H + j] + peep[2, j] * c_new)
                        gates[t, b, j] = i_g
                        gates[t, b, H + j] = f_g
                        gates[t, b, 2 * H + j] = o_g
                        gates[t, b, 3 * H + j] = g_g
                        cp[b, j] = c_new
                        hp[b, j] = o_g * _tanh(c_new)
                for j in range(H):
                    hs[t, b, j] = hp[b, j]
                    cs[t, b, j] = cp[b, j]
    return hs_arr, cs_arr, gates_arr


def lstm_backward(dhs_in, hs_in, cs_in, gates_in, wh_in, peep_in, mask_in):
    cdef double[:, :, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef double[:, :, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef double[:, :, ::1] cs = np.ascontiguousarray(cs_in, dtype=np.float64)
    cdef double[:, :, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[:, ::1] peep = np.ascontiguousarray(peep_in, dtype=np.float64)
    cdef double[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.float64)
    cdef Py_ssize_t S = hs.shape[0], B = hs.shape[1], H = hs.shape[2]
    cdef Py_ssize_t G = 4 * H
    dxw_arr = np.zeros((S, B, G))
    dwh_arr = np.zeros((H, G))
    dpeep_arr = np.zeros((3, H))
    dhn_arr = np.zeros((B, H))
    dcn_arr = np.zeros((B, H))
    dhrec_arr = np.zeros((B, H))
    zero_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dxw = dxw_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[:, ::1] dpeep = dpeep_arr
    cdef double[:, ::1] dhn = dhn_arr
    cdef double[:, ::1] dcn = dcn_arr
    cdef double[:, ::1] dhrec = dhrec_arr
    cdef double[:, ::1] zero = zero_arr
    cdef Py_ssize_t t, b, j
    cdef double dh, dc, i_g, f_g, o_g, g_g, cn, cpv, tc, do_pre, dct, di_pre, df_pre, dg_pre
    cdef double *hprev
    cdef double *cprev
    if S == 0 or B == 0 or H == 0:
        return dxw_arr, dwh_arr, dpeep_arr
    with nogil:
        for t in range(S - 1, -1, -1):
            if t > 0:
                hprev = &hs[t - 1, 0, 0]
                cprev = &cs[t - 1, 0, 0]
            else:
                hprev = &zero[0, 0]
                cprev = &zero[0, 0]
            for b in range(B):
                if mask[t, b] != 0.0:
                    for j in range(H):
                        dh = dhs[t, b, j] + dhn[b, j]
                        dc = dcn[b, j]
                        i_g = gates[t, b, j]
                        f_g = gates[t, b, H + j]
                        o_g = gates[t, b, 2 * H + j]
                        g_g = gates[t, b, 3 * H + j]
                        cn = cs[t, b, j]
                        cpv = cprev[b * H + j]
                        tc = _tanh(cn)
                        do_pre = dh * tc * o_g * (1.0 - o_g)
                        dct = dc + dh * o_g * (1.0 - tc * tc) + do_pre * peep[2, j]
                        di_pre = dct * g_g * i_g * (1.0 - i_g)
                        df_pre = dct * cpv * f_g * (1.0 - f_g)
                        dg_pre = dct * i_g * (1.0 - g_g * g_g)
                        dpeep[0, j] += di_pre * cpv
                        dpeep[1, j] += df_pre * cpv
                        dpeep[2, j] += do_pre * cn
                        dxw[t, b, j] = di_pre
                        dxw[t, b, H + j] = df_pre
                        dxw[t, b, 2 * H + j] = do_pre
                        dxw[t, b, 3 * H + j] = dg_pre
                        dcn[b, j] = dct * f_g + di_pre * peep[0, j] + df_pre * peep[1, j]
                        dhrec[b, j] = 0.0
                else:
                    for j in range(H):
                        dhrec[b, j] = dhs[t, b, j] + dhn[b, j]
            # dW_h += h_prev^T dz ; dh_next = dz W_h^T + carried part
            _gemm_rm(<int>H, <int>G, <int>B, hprev, <int>H, &dxw[t, 0, 0], <int>G,
                     1.0, &dwh[0, 0], <int>G, True, False)
            for b in range(B):
                for j in range(H):
                    dhn[b, j] = dhrec[b, j]
            _gemm_rm(<int>B, <int>H, <int>G, &dxw[t, 0, 0], <int>G, &wh[0, 0], <int>G,
                     1.0, &dhn[0, 0], <int>H, False, True)
    return dxw_arr, dwh_arr, dpeep_arr
