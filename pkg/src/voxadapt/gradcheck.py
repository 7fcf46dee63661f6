"""Central finite-difference oracle for analytic gradients.

All checks run at 64-bit: finite differences at float32 drown in
rounding noise. The reported figure is the max over all coordinates of
|analytic - numeric| / max(1, |numeric|).
"""

import numpy as np

from .tensor import Tensor, no_grad

FD_STEP = 1e-5


def _eval(fn, arrays) -> float:
    with no_grad():
        out = fn(*[Tensor(a) for a in arrays])
    return float(out.data)


def grad_check(fn, inputs, step: float = FD_STEP) -> float:
    """Max relative error of d fn / d inputs against central differences.

    fn maps one Tensor per input array to a scalar Tensor and must be
    deterministic; inputs are promoted to float64.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = fn(*leaves)
    loss.backward()
    analytic = [
        np.zeros_like(a) if leaf.grad is None else leaf.grad
        for a, leaf in zip(arrays, leaves)
    ]

    worst = 0.0
    for arr, ana in zip(arrays, analytic):
        flat = arr.reshape(-1)
        ana_flat = ana.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + step
            f_plus = _eval(fn, arrays)
            flat[j] = saved - step
            f_minus = _eval(fn, arrays)
            flat[j] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(ana_flat[j] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def grad_check_params(loss_fn, params, step: float = FD_STEP) -> float:
    """Same check for parameters already wired into a model.

    loss_fn() rebuilds the forward pass and returns the scalar loss;
    params are perturbed in place (and restored). Parameters must hold
    float64 data and start with zeroed grads.
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError(f"grad_check_params requires float64, got {p.dtype}")

    loss = loss_fn()
    loss.backward()

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ana = p.grad.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + step
            with no_grad():
                f_plus = float(loss_fn().data)
            flat[j] = saved - step
            with no_grad():
                f_minus = float(loss_fn().data)
            flat[j] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(ana[j] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
        p.zero_grad()
    return worst
