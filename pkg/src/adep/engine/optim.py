"""Adam optimizer over named parameter arrays (updated in place)."""

import numpy as np

from ..errors import DimensionError
from . import kernels


class Adam:
    """Standard bias-corrected Adam.

    Parameters are (name, array) pairs; step() consumes a {name: grad} dict
    and skips parameters without a gradient this step (their moments do not
    decay, matching the usual skip-if-grad-is-None convention). The update
    order is the construction order, so runs are deterministic.
    """

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._params = list(named_params)
        self._m = {name: np.zeros_like(p) for name, p in self._params}
        self._v = {name: np.zeros_like(p) for name, p in self._params}

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, param in self._params:
            grad = grads.get(name)
            if grad is None:
                continue
            if grad.shape != param.shape:
                raise DimensionError(
                    f"gradient for {name} has shape {grad.shape}, expected {param.shape}"
                )
            kernels.adam_update(
                param, grad, self._m[name], self._v[name],
                self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
            )
