# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM sequence kernels.

The per-timestep recurrence runs natively: recurrent matmuls through BLAS
dgemm and the gate nonlinearities in plain-C helper loops over contiguous
spans with restrict pointers, which gcc vectorizes against libmvec's SIMD
tanh (the kernels are transcendental-bound). Non-sequential matmuls (input
projection, weight gradients) stay in numpy.

Contract shared with the numpy fallback:

    lstm_seq_forward(x_pre, b, wh, h_seq, c_all, caches)
        x_pre  [T, B, 4H]  x @ wx, bias NOT added; clobbered as scratch
        b      [4H]
        wh     [H, 4H]
        h_seq  [T, B, H]   out
        c_all  [T+1, B, H] out; c_all[0] must hold the initial cell state
        caches [T, B, 5H]  out: (i, f, g, o, tanh(c_t)) per step

    lstm_seq_backward(g, wh, c_all, caches, da, dh_buf, dc_buf)
        g      [T, B, H]   upstream dL/dh_t
        da     [T, B, 4H]  out: preactivation gradients
        dh_buf, dc_buf     [B, H] scratch

Gate blocks are ordered (input, forget, candidate, output); the initial
hidden state is zero (the t=0 recurrent matmul is skipped).
"""

from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"

cdef extern from *:
    """
    #include <math.h>

    static void crosspath_gates_forward(const double* restrict a,
                                        const double* restrict b,
                                        const double* restrict c_prev,
                                        double* restrict h,
                                        double* restrict c_out,
                                        double* restrict cache,
                                        long B, long H) {
        for (long r = 0; r < B; r++) {
            const double* ar = a + r * 4 * H;
            const double* cp = c_prev + r * H;
            double* ch = cache + r * 5 * H;
            double* co = c_out + r * H;
            double* hr = h + r * H;
            for (long j = 0; j < H; j++)
                ch[j] = 0.5 * (tanh(0.5 * (ar[j] + b[j])) + 1.0);
            for (long j = 0; j < H; j++)
                ch[H + j] = 0.5 * (tanh(0.5 * (ar[H + j] + b[H + j])) + 1.0);
            for (long j = 0; j < H; j++)
                ch[2 * H + j] = tanh(ar[2 * H + j] + b[2 * H + j]);
            for (long j = 0; j < H; j++)
                ch[3 * H + j] = 0.5 * (tanh(0.5 * (ar[3 * H + j] + b[3 * H + j])) + 1.0);
            for (long j = 0; j < H; j++)
                co[j] = ch[H + j] * cp[j] + ch[j] * ch[2 * H + j];
            for (long j = 0; j < H; j++)
                ch[4 * H + j] = tanh(co[j]);
            for (long j = 0; j < H; j++)
                hr[j] = ch[3 * H + j] * ch[4 * H + j];
        }
    }

    static void crosspath_gates_backward(const double* restrict dh,
                                         const double* restrict c_prev,
                                         const double* restrict cache,
                                         double* restrict da,
                                         double* restrict dc,
                                         long B, long H) {
        for (long r = 0; r < B; r++) {
            const double* dhr = dh + r * H;
            const double* cp = c_prev + r * H;
            const double* ch = cache + r * 5 * H;
            double* dar = da + r * 4 * H;
            double* dcr = dc + r * H;
            for (long j = 0; j < H; j++) {
                double i_g = ch[j];
                double f_g = ch[H + j];
                double g_g = ch[2 * H + j];
                double o_g = ch[3 * H + j];
                double tc = ch[4 * H + j];
                double dcv = dcr[j] + dhr[j] * o_g * (1.0 - tc * tc);
                dar[j] = (dcv * g_g) * i_g * (1.0 - i_g);
                dar[H + j] = (dcv * cp[j]) * f_g * (1.0 - f_g);
                dar[2 * H + j] = (dcv * i_g) * (1.0 - g_g * g_g);
                dar[3 * H + j] = (dhr[j] * tc) * o_g * (1.0 - o_g);
                dcr[j] = dcv * f_g;
            }
        }
    }
    """
    void crosspath_gates_forward(const double* a, const double* b, const double* c_prev,
                                 double* h, double* c_out, double* cache,
                                 long B, long H) nogil
    void crosspath_gates_backward(const double* dh, const double* c_prev,
                                  const double* cache, double* da, double* dc,
                                  long B, long H) nogil


cdef void _matmul_nn(double* a, double* b, double* c, int m, int k, int n,
                     double beta) noexcept nogil:
    """Row-major c[m,n] = a[m,k] @ b[k,n] + beta * c."""
    cdef double alpha = 1.0
    cdef char no = b'N'
    dgemm(&no, &no, &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


cdef void _matmul_nt(double* a, double* b, double* c, int m, int k, int n,
                     double beta) noexcept nogil:
    """Row-major c[m,n] = a[m,k] @ b[n,k]^T + beta * c."""
    cdef double alpha = 1.0
    cdef char tr = b'T'
    cdef char no = b'N'
    dgemm(&tr, &no, &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


def lstm_seq_forward(double[:, :, ::1] x_pre, double[::1] b, double[:, ::1] wh,
                     double[:, :, ::1] h_seq, double[:, :, ::1] c_all,
                     double[:, :, ::1] caches):
    cdef Py_ssize_t T = x_pre.shape[0]
    cdef Py_ssize_t B = x_pre.shape[1]
    cdef Py_ssize_t H = wh.shape[0]
    cdef Py_ssize_t t
    with nogil:
        for t in range(T):
            if t > 0:
                _matmul_nn(&h_seq[t - 1, 0, 0], &wh[0, 0], &x_pre[t, 0, 0],
                           <int>B, <int>H, <int>(4 * H), 1.0)
            crosspath_gates_forward(&x_pre[t, 0, 0], &b[0], &c_all[t, 0, 0],
                                    &h_seq[t, 0, 0], &c_all[t + 1, 0, 0],
                                    &caches[t, 0, 0], B, H)


def lstm_seq_backward(double[:, :, ::1] g, double[:, ::1] wh,
                      double[:, :, ::1] c_all, double[:, :, ::1] caches,
                      double[:, :, ::1] da, double[:, ::1] dh_buf,
                      double[:, ::1] dc_buf):
    cdef Py_ssize_t T = g.shape[0]
    cdef Py_ssize_t B = g.shape[1]
    cdef Py_ssize_t H = wh.shape[0]
    cdef Py_ssize_t t, r, j
    with nogil:
        for r in range(B):
            for j in range(H):
                dh_buf[r, j] = g[T - 1, r, j]
                dc_buf[r, j] = 0.0
        for t in range(T - 1, -1, -1):
            crosspath_gates_backward(&dh_buf[0, 0], &c_all[t, 0, 0],
                                     &caches[t, 0, 0], &da[t, 0, 0],
                                     &dc_buf[0, 0], B, H)
            if t > 0:
                # dh_{t-1} = g[t-1] + da_t @ wh^T
                for r in range(B):
                    for j in range(H):
                        dh_buf[r, j] = g[t - 1, r, j]
                _matmul_nt(&da[t, 0, 0], &wh[0, 0], &dh_buf[0, 0],
                           <int>B, <int>(4 * H), <int>H, 1.0)
