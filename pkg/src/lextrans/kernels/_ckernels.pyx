# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Must match lextrans.kernels.pyref to floating-point round-off; the
parity tests in tests/test_kernels.py hold both to that.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh, INFINITY

cnp.import_array()

ctypedef fused floating:
    float
    double


cdef inline floating _expit(floating x) nogil:
    if x >= 0:
        return <floating>(1.0 / (1.0 + exp(-<double>x)))
    cdef double e = exp(<double>x)
    return <floating>(e / (1.0 + e))


def lstm_gates_forward(floating[:, ::1] pre, floating[:, ::1] c_prev):
    """Elementwise LSTM update. `pre` is (B, 4H) as [i, f, g, o] blocks."""
    cdef Py_ssize_t batch = pre.shape[0]
    cdef Py_ssize_t hidden = pre.shape[1] // 4
    dtype = np.float32 if floating is float else np.float64
    h_arr = np.empty((batch, hidden), dtype=dtype)
    c_arr = np.empty((batch, hidden), dtype=dtype)
    gates_arr = np.empty((batch, 4 * hidden), dtype=dtype)
    cdef floating[:, ::1] h = h_arr
    cdef floating[:, ::1] c = c_arr
    cdef floating[:, ::1] gates = gates_arr
    cdef Py_ssize_t b, k
    cdef floating i, f, g, o, cc
    with nogil:
        for b in range(batch):
            for k in range(hidden):
                i = _expit(pre[b, k])
                f = _expit(pre[b, hidden + k])
                g = <floating>tanh(<double>pre[b, 2 * hidden + k])
                o = _expit(pre[b, 3 * hidden + k])
                gates[b, k] = i
                gates[b, hidden + k] = f
                gates[b, 2 * hidden + k] = g
                gates[b, 3 * hidden + k] = o
                cc = f * c_prev[b, k] + i * g
                c[b, k] = cc
                h[b, k] = o * <floating>tanh(<double>cc)
    return h_arr, c_arr, gates_arr


def lstm_gates_backward(floating[:, ::1] gates, floating[:, ::1] c_prev,
                        floating[:, ::1] c, floating[:, ::1] dh,
                        floating[:, ::1] dc):
    """Adjoint of `lstm_gates_forward`: returns (dpre, dc_prev)."""
    cdef Py_ssize_t batch = gates.shape[0]
    cdef Py_ssize_t hidden = gates.shape[1] // 4
    dtype = np.float32 if floating is float else np.float64
    dpre_arr = np.empty((batch, 4 * hidden), dtype=dtype)
    dc_prev_arr = np.empty((batch, hidden), dtype=dtype)
    cdef floating[:, ::1] dpre = dpre_arr
    cdef floating[:, ::1] dc_prev = dc_prev_arr
    cdef Py_ssize_t b, k
    cdef floating i, f, g, o, tc, dct
    with nogil:
        for b in range(batch):
            for k in range(hidden):
                i = gates[b, k]
                f = gates[b, hidden + k]
                g = gates[b, 2 * hidden + k]
                o = gates[b, 3 * hidden + k]
                tc = <floating>tanh(<double>c[b, k])
                dct = dc[b, k] + dh[b, k] * o * (<floating>1.0 - tc * tc)
                dpre[b, k] = dct * g * i * (<floating>1.0 - i)
                dpre[b, hidden + k] = dct * c_prev[b, k] * f * (<floating>1.0 - f)
                dpre[b, 2 * hidden + k] = dct * i * (<floating>1.0 - g * g)
                dpre[b, 3 * hidden + k] = dh[b, k] * tc * o * (<floating>1.0 - o)
                dc_prev[b, k] = dct * f
    return dpre_arr, dc_prev_arr


def adam_update(floating[::1] data, floating[::1] grad, floating[::1] m,
                floating[::1] v, double beta1, double beta2,
                double step_size, double eps_hat, double grad_scale=1.0):
    """One in-place Adam update on flat buffers.

    Single fused pass; bias corrections are folded into `step_size` and
    `eps_hat` by the caller, and `grad_scale` multiplies the gradient
    first so norm clipping needs no separate pass. Updates data, m and v
    in place.
    """
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t i
    cdef floating g, mm, vv
    cdef floating b1 = <floating>beta1
    cdef floating b2 = <floating>beta2
    cdef floating omb1 = <floating>(1.0 - beta1)
    cdef floating omb2 = <floating>(1.0 - beta2)
    cdef floating step = <floating>step_size
    cdef floating eps = <floating>eps_hat
    cdef floating scale = <floating>grad_scale
    cdef bint scaled = grad_scale != 1.0
    with nogil:
        for i in range(n):
            g = grad[i]
            if scaled:
                g = scale * g
            mm = b1 * m[i] + omb1 * g
            vv = b2 * v[i] + omb2 * (g * g)
            m[i] = mm
            v[i] = vv
            data[i] -= (step * mm) / (<floating>sqrt(<double>vv) + eps)


def softmax_rows(floating[:, ::1] x):
    """Row-wise softmax of a 2-d array; -inf entries map to zero."""
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((rows, cols), dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    cdef Py_ssize_t r, j
    cdef floating m, s
    with nogil:
        for r in range(rows):
            m = x[r, 0]
            for j in range(1, cols):
                if x[r, j] > m:
                    m = x[r, j]
            s = 0
            for j in range(cols):
                y[r, j] = <floating>exp(<double>(x[r, j] - m))
                s += y[r, j]
            for j in range(cols):
                y[r, j] /= s
    return y_arr


def softmax_rows_backward(floating[:, ::1] y, floating[:, ::1] dy):
    """Adjoint of `softmax_rows` given its output `y`."""
    cdef Py_ssize_t rows = y.shape[0]
    cdef Py_ssize_t cols = y.shape[1]
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty((rows, cols), dtype=dtype)
    cdef floating[:, ::1] dx = dx_arr
    cdef Py_ssize_t r, j
    cdef floating s
    with nogil:
        for r in range(rows):
            s = 0
            for j in range(cols):
                s += y[r, j] * dy[r, j]
            for j in range(cols):
                dx[r, j] = y[r, j] * (dy[r, j] - s)
    return dx_arr
