"""Pure-numpy implementation of the LSTM sequence kernels.

Same contract as the compiled backend (see _gatekernels.pyx): the forward
clobbers x_pre with the full gate preactivations, fills h_seq / c_all[1:] /
caches; the backward fills da given upstream dh gradients and scratch
buffers. Gate blocks ordered (i, f, g, o); cache blocks (i, f, g, o, tanh c).
"""

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_seq_forward(x_pre, b, wh, h_seq, c_all, caches):
    T, B, _ = x_pre.shape
    H = wh.shape[0]
    for t in range(T):
        a = x_pre[t]
        if t > 0:
            a += h_seq[t - 1] @ wh
        a_b = a + b
        i = _sigmoid(a_b[:, 0 * H:1 * H])
        f = _sigmoid(a_b[:, 1 * H:2 * H])
        g = np.tanh(a_b[:, 2 * H:3 * H])
        o = _sigmoid(a_b[:, 3 * H:4 * H])
        c = f * c_all[t] + i * g
        tc = np.tanh(c)
        c_all[t + 1] = c
        h_seq[t] = o * tc
        caches[t, :, 0 * H:1 * H] = i
        caches[t, :, 1 * H:2 * H] = f
        caches[t, :, 2 * H:3 * H] = g
        caches[t, :, 3 * H:4 * H] = o
        caches[t, :, 4 * H:5 * H] = tc


def lstm_seq_backward(g, wh, c_all, caches, da, dh_buf, dc_buf):
    T, B, H = g.shape
    dh_buf[...] = g[T - 1]
    dc_buf[...] = 0.0
    for t in range(T - 1, -1, -1):
        i = caches[t, :, 0 * H:1 * H]
        f = caches[t, :, 1 * H:2 * H]
        gg = caches[t, :, 2 * H:3 * H]
        o = caches[t, :, 3 * H:4 * H]
        tc = caches[t, :, 4 * H:5 * H]
        dc = dc_buf + dh_buf * o * (1.0 - tc * tc)
        do = dh_buf * tc
        da[t, :, 0 * H:1 * H] = (dc * gg) * i * (1.0 - i)
        da[t, :, 1 * H:2 * H] = (dc * c_all[t]) * f * (1.0 - f)
        da[t, :, 2 * H:3 * H] = (dc * i) * (1.0 - gg * gg)
        da[t, :, 3 * H:4 * H] = do * o * (1.0 - o)
        dc_buf[...] = dc * f
        if t > 0:
            dh_buf[...] = g[t - 1] + da[t] @ wh.T
