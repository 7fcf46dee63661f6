"""Bias-corrected Adam over named Parameters.

Step counts are kept per parameter so that parameters masked out for
part of a run (trainability flags) still get correct bias correction
when they start moving. A parameter whose gradient is exactly zero
receives an exactly-zero update, which the freeze-exactness guarantees
rely on.
"""

import numpy as np

from .tensor import Parameter


class OptimizerError(RuntimeError):
    pass


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.98, eps: float = 1e-9):
        self.params: list[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {}
        self._v = {}
        self._t = {}
        for p in self.params:
            if p.name in self._m:
                raise OptimizerError(f"duplicate parameter name: {p.name}")
            self._m[p.name] = np.zeros_like(p.data)
            self._v[p.name] = np.zeros_like(p.data)
            self._t[p.name] = 0

    def step(self):
        """Apply one update to every trainable parameter, then zero all grads."""
        for p in self.params:
            if p.name not in self._m:
                raise OptimizerError(f"no moment state for parameter {p.name}")
            if not p.trainable:
                continue
            g = p.grad
            t = self._t[p.name] + 1
            self._t[p.name] = t
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        for p in self.params:
            p.zero_grad()
