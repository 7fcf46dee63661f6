"""Differentiable neural ops built on the tensor engine.

Layer norm and conv1d dispatch to the selected kernel backend;
everything else composes tensor primitives. Conditional layer norm is
literally layer_norm applied to a computed scale/bias, so the two are
float-for-float identical by construction.
"""

import math

import numpy as np

from . import kernels
from .tensor import Tensor, _check_finite, gather_rows, matmul
from .tensor import mean_all, mean_axis0, relu  # noqa: F401  (re-exported)
from .tensor import bmm, heads_merge, heads_split, softmax_rows, transpose_last2
from .tensor import concat_cols, slice_cols  # noqa: F401  (re-exported)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else out + b


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise gamma * (x - mu) / sqrt(var + eps) + beta."""
    if eps < 0:
        raise ValueError("layer_norm: eps must be >= 0")
    if x.data.ndim not in (1, 2):
        raise ValueError("layer_norm expects a vector or a matrix")
    h = x.data.shape[-1]
    if h < 1 or gamma.data.shape != (h,) or beta.data.shape != (h,):
        raise ValueError(
            f"layer_norm shape mismatch: x {x.shape}, gamma {gamma.shape}, "
            f"beta {beta.shape}"
        )
    _check_finite(x.data, "layer_norm input")

    squeeze = x.data.ndim == 1
    x2 = x.data[None, :] if squeeze else x.data
    y, xhat, inv_std = kernels.layer_norm_forward(x2, gamma.data, beta.data, eps)

    def backward(g):
        g2 = g[None, :] if squeeze else g
        gx, ggamma, gbeta = kernels.layer_norm_backward(gamma.data, xhat, inv_std, g2)
        if x.requires_grad:
            x._accumulate(gx[0] if squeeze else gx)
        if gamma.requires_grad:
            gamma._accumulate(ggamma)
        if beta.requires_grad:
            beta._accumulate(gbeta)

    out = y[0] if squeeze else y
    return Tensor._result(out, (x, gamma, beta), backward, "layer_norm")


def conditional_layer_norm(
    x: Tensor, emb: Tensor, w_gamma: Tensor, w_beta: Tensor, eps: float = 1e-5,
    b_gamma: Tensor | None = None, b_beta: Tensor | None = None,
) -> Tensor:
    """Layer norm whose scale/bias are linear in a conditioning vector."""
    gamma = linear(emb, w_gamma, b_gamma)
    beta = linear(emb, w_beta, b_beta)
    return layer_norm(x, gamma, beta, eps)


def conv1d(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
    pad_mode: str = kernels.PAD_ZERO,
) -> Tensor:
    """Same-padded 1-D convolution over time. x: [L, c_in], w: [c_out, c_in, k]."""
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ValueError("conv1d expects x [L, c_in] and w [c_out, c_in, k]")
    if x.data.shape[0] == 0:
        raise ValueError("conv1d: empty input")
    if stride < 1:
        raise ValueError("conv1d: stride must be >= 1")
    if w.data.shape[2] % 2 == 0:
        raise ValueError("conv1d: kernel size must be odd for same padding")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv1d channel mismatch: x {x.shape}, w {w.shape}"
        )

    bias = None if b is None else b.data
    y, cache = kernels.conv1d_with_cache(x.data, w.data, bias, stride, pad_mode)

    def backward(g):
        gx, gw, gb = kernels.conv1d_backward(x.data, w.data, stride, pad_mode, g,
                                             cache=cache)
        if x.requires_grad:
            x._accumulate(gx)
        if w.requires_grad:
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(gb)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(y, parents, backward, "conv1d")


def multi_head_attention(
    x: Tensor, wq, bq, wk, bk, wv, bv, wo, bo, n_heads: int,
    return_weights: bool = False,
):
    """Unmasked self-attention over an [L, h] sequence.

    Heads run as one batched matmul; return_weights yields the
    [n_heads, L, L] attention tensor.
    """
    length, h = x.data.shape
    if n_heads < 1 or h % n_heads != 0:
        raise ValueError(f"hidden size {h} not divisible by {n_heads} heads")
    q = heads_split(linear(x, wq, bq), n_heads)
    k = heads_split(linear(x, wk, bk), n_heads)
    v = heads_split(linear(x, wv, bv), n_heads)
    scale = 1.0 / math.sqrt(h // n_heads)

    att = softmax_rows(bmm(q, transpose_last2(k)) * scale)
    out = linear(heads_merge(bmm(att, v)), wo, bo)
    return (out, att) if return_weights else out


def mean_pool_time(x: Tensor) -> Tensor:
    """Column means over the time axis of an [T, d] matrix."""
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ValueError("mean_pool_time expects a non-empty [T, d] matrix")
    return mean_axis0(x)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return mean_all(d * d)


def _segment_ids(durations) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(durations, dtype=np.int64)
    if d.ndim != 1:
        raise ValueError("durations must be a 1-D integer sequence")
    if (d < 0).any():
        raise ValueError("durations must be >= 0")
    return d, np.repeat(np.arange(d.shape[0]), d)


def length_regulate(hiddens: Tensor, durations) -> Tensor:
    """Repeat row i of hiddens durations[i] times (frame expansion)."""
    d, seg = _segment_ids(durations)
    if d.shape[0] != hiddens.data.shape[0]:
        raise ValueError("length_regulate: one duration per hidden row required")
    if seg.size == 0:
        raise ValueError("length_regulate: total duration is zero")
    return gather_rows(hiddens, seg)


def phoneme_average(mel: Tensor, durations) -> Tensor:
    """Mean of the mel frames aligned to each phoneme; zero-length -> zero row."""
    d, seg = _segment_ids(durations)
    if seg.size != mel.data.shape[0]:
        raise ValueError(
            f"phoneme_average: durations sum {seg.size} != frames {mel.data.shape[0]}"
        )
    n, dim = d.shape[0], mel.data.shape[1]
    sums = np.zeros((n, dim), dtype=mel.dtype)
    np.add.at(sums, seg, mel.data)
    denom = np.maximum(d, 1).astype(mel.dtype)[:, None]
    out = sums / denom

    def backward(g):
        if mel.requires_grad:
            mel._accumulate((g / denom)[seg])

    return Tensor._result(out, (mel,), backward, "phoneme_average")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or p <= 0:
        return x
    keep = rng.random(x.data.shape) >= p
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * Tensor(mask)
