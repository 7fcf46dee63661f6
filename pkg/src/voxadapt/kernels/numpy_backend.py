"""Pure-numpy reference kernels (the fallback backend).

The compiled backend replaces the per-element inner loops (im2col /
col2im, fused layer norm); the GEMM inside conv1d is BLAS either way.
Both backends implement the same four-function API and the same
padding semantics, so they are drop-in interchangeable.
"""

import numpy as np

PAD_ZERO = "zero"
PAD_EDGE = "edge"


def same_pad(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(out_length, pad_left, pad_right) for 'same' padding."""
    out_len = (length + stride - 1) // stride
    total = max((out_len - 1) * stride + kernel - length, 0)
    left = total // 2
    return out_len, left, total - left


def _pad_input(x, left, right, pad_mode):
    if left == 0 and right == 0:
        return x
    length = x.shape[0]
    out = np.empty((length + left + right, x.shape[1]), dtype=x.dtype)
    out[left:left + length] = x
    if pad_mode == PAD_ZERO:
        out[:left] = 0
        out[left + length:] = 0
    else:
        out[:left] = x[0]
        out[left + length:] = x[-1]
    return out


def _im2col(x_pad, out_len, kernel, stride):
    # windows: [out_len, kernel, c_in] -> [out_len, kernel * c_in]
    win = np.lib.stride_tricks.sliding_window_view(x_pad, kernel, axis=0)
    win = win[::stride].transpose(0, 2, 1)
    return np.ascontiguousarray(win).reshape(out_len, -1)


def conv1d_with_cache(x, w, b, stride, pad_mode):
    """Forward plus the (x_pad, cols) work products backward can reuse."""
    length = x.shape[0]
    c_out, c_in, kernel = w.shape
    out_len, left, right = same_pad(length, kernel, stride)
    x_pad = _pad_input(x, left, right, pad_mode)
    cols = _im2col(x_pad, out_len, kernel, stride)
    wmat = w.transpose(0, 2, 1).reshape(c_out, kernel * c_in)
    y = cols @ wmat.T
    if b is not None:
        y = y + b
    return y, (x_pad, cols)


def conv1d_forward(x, w, b, stride, pad_mode):
    """x: [L, c_in], w: [c_out, c_in, k], b: [c_out] -> [ceil(L/stride), c_out]."""
    return conv1d_with_cache(x, w, b, stride, pad_mode)[0]


def conv1d_backward(x, w, stride, pad_mode, gy, cache=None):
    """Gradients of conv1d_forward w.r.t. (x, w, b)."""
    length, c_in = x.shape
    c_out, _, kernel = w.shape
    out_len, left, right = same_pad(length, kernel, stride)
    if cache is None:
        x_pad = _pad_input(x, left, right, pad_mode)
        cols = _im2col(x_pad, out_len, kernel, stride)
    else:
        x_pad, cols = cache
    wmat = w.transpose(0, 2, 1).reshape(c_out, kernel * c_in)

    gw = (gy.T @ cols).reshape(c_out, kernel, c_in).transpose(0, 2, 1)
    gb = gy.sum(axis=0)
    gcols = gy @ wmat

    gx_pad = np.zeros_like(x_pad)
    base = np.arange(out_len) * stride
    for j in range(kernel):
        gx_pad[base + j] += gcols[:, j * c_in:(j + 1) * c_in]
    gx = gx_pad[left:left + length]
    if pad_mode == PAD_EDGE:
        gx = gx.copy()
        if left:
            gx[0] += gx_pad[:left].sum(axis=0)
        if right:
            gx[-1] += gx_pad[left + length:].sum(axis=0)
    return np.ascontiguousarray(gx), gw, gb


def layer_norm_forward(x, gamma, beta, eps):
    """Row-wise layer norm. x: [N, h] -> (y, xhat, inv_std[N, 1])."""
    eps = x.dtype.type(eps)
    mu = x.mean(axis=1, keepdims=True)
    d = x - mu
    var = (d * d).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = d * inv_std
    return gamma * xhat + beta, xhat, inv_std


def layer_norm_backward(gamma, xhat, inv_std, gy):
    """Gradients of layer_norm_forward w.r.t. (x, gamma, beta)."""
    gxhat = gy * gamma
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = inv_std * (gxhat - m1 - xhat * m2)
    return gx, (gy * xhat).sum(axis=0), gy.sum(axis=0)
