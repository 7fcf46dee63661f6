"""Kernel backend backed by the Cython extension.

Padding layout and GEMM are shared with the numpy backend; only the
per-element loops (window gather/scatter, fused layer norm) run in C.
"""

import numpy as np

from . import _speedups
from .numpy_backend import PAD_EDGE, PAD_ZERO, _pad_input, same_pad


def conv1d_with_cache(x, w, b, stride, pad_mode):
    length = x.shape[0]
    c_out, c_in, kernel = w.shape
    out_len, left, right = same_pad(length, kernel, stride)
    x_pad = np.ascontiguousarray(_pad_input(x, left, right, pad_mode))
    cols = _speedups.im2col(x_pad, kernel, stride, out_len)
    wmat = np.ascontiguousarray(w.transpose(0, 2, 1).reshape(c_out, kernel * c_in))
    y = cols @ wmat.T
    if b is not None:
        y = y + b
    return y, (x_pad, cols)


def conv1d_forward(x, w, b, stride, pad_mode):
    return conv1d_with_cache(x, w, b, stride, pad_mode)[0]


def conv1d_backward(x, w, stride, pad_mode, gy, cache=None):
    length, c_in = x.shape
    c_out, _, kernel = w.shape
    out_len, left, right = same_pad(length, kernel, stride)
    if cache is None:
        x_pad = np.ascontiguousarray(_pad_input(x, left, right, pad_mode))
        cols = _speedups.im2col(x_pad, kernel, stride, out_len)
    else:
        x_pad, cols = cache
    wmat = np.ascontiguousarray(w.transpose(0, 2, 1).reshape(c_out, kernel * c_in))

    gy = np.ascontiguousarray(gy)
    gw = (gy.T @ cols).reshape(c_out, kernel, c_in).transpose(0, 2, 1)
    gb = gy.sum(axis=0)
    gcols = np.ascontiguousarray(gy @ wmat)

    gx_pad = _speedups.col2im(gcols, kernel, stride, x_pad.shape[0])
    gx = gx_pad[left:left + length]
    if pad_mode == PAD_EDGE:
        gx = gx.copy()
        if left:
            gx[0] += gx_pad[:left].sum(axis=0)
        if right:
            gx[-1] += gx_pad[left + length:].sum(axis=0)
    return np.ascontiguousarray(gx), gw, gb


def layer_norm_forward(x, gamma, beta, eps):
    y, xhat, inv_std = _speedups.ln_forward(
        np.ascontiguousarray(x),
        np.ascontiguousarray(gamma),
        np.ascontiguousarray(beta),
        float(eps),
    )
    return y, xhat, inv_std[:, None]


def layer_norm_backward(gamma, xhat, inv_std, gy):
    return _speedups.ln_backward(
        np.ascontiguousarray(gamma),
        np.ascontiguousarray(xhat),
        np.ascontiguousarray(inv_std[:, 0]),
        np.ascontiguousarray(gy),
    )
