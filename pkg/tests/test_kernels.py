"""Backend parity: the compiled kernels must agree with the numpy
fallback on every supported shape, dtype and padding mode."""

import numpy as np
import numpy.testing as npt
import pytest

from voxadapt import kernels

BACKENDS = kernels.available_backends()
needs_compiled = pytest.mark.skipif(
    "compiled" not in BACKENDS, reason="compiled extension not built"
)


def test_same_pad_arithmetic():
    assert kernels.same_pad(3, 3, 1) == (3, 1, 1)
    assert kernels.same_pad(4, 1, 3) == (2, 0, 0)
    assert kernels.same_pad(10, 9, 1) == (10, 4, 4)
    assert kernels.same_pad(7, 5, 3) == (3, 2, 2)
    assert kernels.same_pad(6, 5, 3) == (2, 1, 1)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("pad", [kernels.PAD_ZERO, kernels.PAD_EDGE])
def test_conv1d_backend_parity(dtype, pad):
    nb = kernels.get_backend("numpy")
    cb = kernels.get_backend("compiled")
    rng = np.random.default_rng(123)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    for length, c_in, c_out, k, stride in [
        (1, 1, 1, 1, 1), (5, 3, 4, 3, 1), (17, 8, 6, 9, 1),
        (12, 80, 32, 5, 3), (7, 2, 2, 5, 4),
    ]:
        x = rng.normal(size=(length, c_in)).astype(dtype)
        w = rng.normal(size=(c_out, c_in, k)).astype(dtype)
        b = rng.normal(size=c_out).astype(dtype)
        y_n = nb.conv1d_forward(x, w, b, stride, pad)
        y_c = cb.conv1d_forward(x, w, b, stride, pad)
        assert y_c.dtype == dtype
        npt.assert_allclose(y_c, y_n, rtol=tol, atol=tol)

        gy = rng.normal(size=y_n.shape).astype(dtype)
        for g_n, g_c in zip(
            nb.conv1d_backward(x, w, stride, pad, gy),
            cb.conv1d_backward(x, w, stride, pad, gy),
        ):
            npt.assert_allclose(g_c, g_n, rtol=tol, atol=tol)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_layer_norm_backend_parity(dtype):
    nb = kernels.get_backend("numpy")
    cb = kernels.get_backend("compiled")
    rng = np.random.default_rng(321)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    for n, h in [(1, 1), (1, 8), (6, 4), (40, 33)]:
        x = rng.normal(size=(n, h)).astype(dtype)
        gamma = rng.normal(size=h).astype(dtype)
        beta = rng.normal(size=h).astype(dtype)
        y_n, xh_n, inv_n = nb.layer_norm_forward(x, gamma, beta, 1e-5)
        y_c, xh_c, inv_c = cb.layer_norm_forward(x, gamma, beta, 1e-5)
        assert y_c.dtype == dtype and inv_c.shape == (n, 1)
        npt.assert_allclose(y_c, y_n, rtol=tol, atol=tol)

        gy = rng.normal(size=(n, h)).astype(dtype)
        outs_n = nb.layer_norm_backward(gamma, xh_n, inv_n, gy)
        outs_c = cb.layer_norm_backward(gamma, xh_c, inv_c, gy)
        for g_n, g_c in zip(outs_n, outs_c):
            npt.assert_allclose(g_c, g_n, rtol=tol, atol=10 * tol)


def test_edge_padding_constant_input_has_no_boundary_effect():
    nb = kernels.get_backend(kernels.BACKEND)
    x = np.full((11, 3), 0.7)
    w = np.random.default_rng(1).normal(size=(4, 3, 5))
    y = nb.conv1d_forward(x, w, None, 3, kernels.PAD_EDGE)
    npt.assert_allclose(y, np.broadcast_to(y[0], y.shape), rtol=0, atol=1e-12)
