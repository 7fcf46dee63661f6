# cython: boundscheck=False, wraparound=False, cdivision=True
"""C inner loops for the hot kernels: im2col/col2im and fused layer norm."""

import numpy as np

from libc.math cimport sqrt

ctypedef fused real:
    float
    double


cdef inline object _dtype_of(real x):
    if real is float:
        return np.float32
    return np.float64


def im2col(real[:, ::1] x_pad, int kernel, int stride, int out_len):
    cdef int c_in = x_pad.shape[1]
    out_arr = np.empty((out_len, kernel * c_in), dtype=_dtype_of(x_pad[0, 0]))
    cdef real[:, ::1] out = out_arr
    cdef int t, j, c, src
    for t in range(out_len):
        for j in range(kernel):
            src = t * stride + j
            for c in range(c_in):
                out[t, j * c_in + c] = x_pad[src, c]
    return out_arr


def col2im(real[:, ::1] gcols, int kernel, int stride, int pad_len):
    cdef int out_len = gcols.shape[0]
    cdef int c_in = gcols.shape[1] // kernel
    gx_arr = np.zeros((pad_len, c_in), dtype=_dtype_of(gcols[0, 0]))
    cdef real[:, ::1] gx = gx_arr
    cdef int t, j, c, dst
    for t in range(out_len):
        for j in range(kernel):
            dst = t * stride + j
            for c in range(c_in):
                gx[dst, c] += gcols[t, j * c_in + c]
    return gx_arr


def ln_forward(real[:, ::1] x, real[::1] gamma, real[::1] beta, double eps):
    cdef int n = x.shape[0]
    cdef int h = x.shape[1]
    dt = _dtype_of(x[0, 0])
    y_arr = np.empty((n, h), dtype=dt)
    xhat_arr = np.empty((n, h), dtype=dt)
    inv_arr = np.empty(n, dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] inv = inv_arr
    cdef int i, j
    cdef double mu, var, d, inv_s
    cdef real xh
    for i in range(n):
        mu = 0.0
        for j in range(h):
            mu += x[i, j]
        mu /= h
        var = 0.0
        for j in range(h):
            d = x[i, j] - mu
            var += d * d
        var /= h
        inv_s = 1.0 / sqrt(var + eps)
        inv[i] = <real> inv_s
        for j in range(h):
            xh = <real> ((x[i, j] - mu) * inv_s)
            xhat[i, j] = xh
            y[i, j] = gamma[j] * xh + beta[j]
    return y_arr, xhat_arr, inv_arr


def ln_backward(real[::1] gamma, real[:, ::1] xhat, real[::1] inv_std,
                real[:, ::1] gy):
    cdef int n = xhat.shape[0]
    cdef int h = xhat.shape[1]
    dt = _dtype_of(xhat[0, 0])
    gx_arr = np.empty((n, h), dtype=dt)
    ggamma_arr = np.zeros(h, dtype=dt)
    gbeta_arr = np.zeros(h, dtype=dt)
    cdef real[:, ::1] gx = gx_arr
    cdef real[::1] ggamma = ggamma_arr
    cdef real[::1] gbeta = gbeta_arr
    cdef int i, j
    cdef double m1, m2, gxh
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(h):
            gxh = gy[i, j] * gamma[j]
            m1 += gxh
            m2 += gxh * xhat[i, j]
        m1 /= h
        m2 /= h
        for j in range(h):
            gxh = gy[i, j] * gamma[j]
            gx[i, j] = <real> (inv_std[i] * (gxh - m1 - xhat[i, j] * m2))
            ggamma[j] += gy[i, j] * xhat[i, j]
            gbeta[j] += gy[i, j]
    return gx_arr, ggamma_arr, gbeta_arr
