"""Neural layers with explicit forward/backward passes.

Every layer operates on float64 matrices of shape (batch, features). A
train-mode forward pushes its saved intermediates onto a per-layer stack and
backward pops them (LIFO), so a layer forwarded twice in one step — the
discriminator sees a real and a fake batch — backpropagates correctly as
long as the backward calls come in reverse order.

Parameter gradients accumulate across backward calls until zero_grad().
"""

import numpy as np

from ..errors import (
    ConfigError,
    DegenerateBatchError,
    DimensionError,
    MissingCacheError,
)
from . import kernels


def check_matrix(x, cols=None, what="input"):
    """Validate a 2-D float64 array, optionally with a fixed column count."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {x.shape}")
    if cols is not None and x.shape[1] != cols:
        raise DimensionError(f"{what} has {x.shape[1]} columns, expected {cols}")
    if x.dtype != np.float64:
        x = x.astype(np.float64)
    return np.ascontiguousarray(x)


class Layer:
    """Base layer: parameter dict, gradient dict, and the forward-cache stack."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _push(self, cache):
        self._cache.append(cache)

    def _pop(self):
        if not self._cache:
            raise MissingCacheError(
                f"{type(self).__name__}.backward() called without a pending train-mode forward"
            )
        return self._cache.pop()

    def _accumulate(self, name, grad):
        if name in self.grads:
            self.grads[name] = self.grads[name] + grad
        else:
            self.grads[name] = grad

    def zero_grad(self):
        self.grads = {}
        self._cache = []


class Linear(Layer):
    """Affine map y = x W^T + b with weight (out, in) and bias (out,).

    Weights draw from the uniform Kaiming fan-in rule U(-sqrt(6/in), +sqrt(6/in));
    biases start at zero.
    """

    def __init__(self, in_dim, out_dim, rng):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        bound = np.sqrt(6.0 / in_dim)
        self.params = {
            "weight": rng.uniform(-bound, bound, size=(out_dim, in_dim)),
            "bias": np.zeros(out_dim),
        }

    def forward(self, x, train=False, rng=None):
        x = check_matrix(x, self.in_dim)
        out = kernels.matmul_nt(x, self.params["weight"]) + self.params["bias"]
        if train:
            self._push(x)
        return out

    def backward(self, grad_out):
        x = self._pop()
        grad_out = check_matrix(grad_out, self.out_dim, "grad_output")
        self._accumulate("weight", kernels.matmul_tn(grad_out, x))
        self._accumulate("bias", grad_out.sum(axis=0))
        return kernels.matmul(grad_out, self.params["weight"])


class BatchNorm(Layer):
    """Per-feature batch normalization with learnable affine (gamma, beta).

    Train mode normalizes by biased batch moments and folds them into the
    running statistics (momentum 0.1, unbiased variance, torch convention);
    eval mode uses the running statistics only.
    """

    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, dim):
        super().__init__()
        self.dim = dim
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.buffers = {"running_mean": np.zeros(dim), "running_var": np.ones(dim)}

    def forward(self, x, train=False, rng=None):
        x = check_matrix(x, self.dim)
        if not train:
            inv = 1.0 / np.sqrt(self.buffers["running_var"] + self.EPS)
            return self.params["gamma"] * ((x - self.buffers["running_mean"]) * inv) + self.params["beta"]
        n = x.shape[0]
        if n < 2:
            raise DegenerateBatchError(
                f"BatchNorm needs a batch of >= 2 rows in train mode, got {n}"
            )
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mean) * inv
        mom = self.MOMENTUM
        self.buffers["running_mean"][:] = (1.0 - mom) * self.buffers["running_mean"] + mom * mean
        self.buffers["running_var"][:] = (1.0 - mom) * self.buffers["running_var"] + mom * (var * n / (n - 1))
        self._push((xhat, inv))
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad_out):
        xhat, inv = self._pop()
        grad_out = check_matrix(grad_out, self.dim, "grad_output")
        self._accumulate("gamma", (grad_out * xhat).sum(axis=0))
        self._accumulate("beta", grad_out.sum(axis=0))
        gxhat = grad_out * self.params["gamma"]
        return inv * (gxhat - gxhat.mean(axis=0) - xhat * (gxhat * xhat).mean(axis=0))


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        x = check_matrix(x)
        if train:
            self._push(x > 0.0)
        return np.maximum(x, 0.0)

    def backward(self, grad_out):
        mask = self._pop()
        return np.asarray(grad_out) * mask


class Dropout(Layer):
    """Inverted dropout: survivors scale by 1/(1-rate) at train time, so
    eval mode is the identity."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        x = check_matrix(x)
        if not train:
            return x
        if self.rate == 0.0:
            self._push(None)
            return x
        if rng is None:
            raise ConfigError("train-mode dropout with rate > 0 requires an rng")
        keep = rng.random(x.shape) >= self.rate
        scale = 1.0 / (1.0 - self.rate)
        self._push((keep, scale))
        return x * keep * scale

    def backward(self, grad_out):
        cache = self._pop()
        if cache is None:
            return np.asarray(grad_out)
        keep, scale = cache
        return np.asarray(grad_out) * keep * scale


class Sigmoid(Layer):
    def forward(self, x, train=False, rng=None):
        x = check_matrix(x)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        if train:
            self._push(out)
        return out

    def backward(self, grad_out):
        out = self._pop()
        return np.asarray(grad_out) * out * (1.0 - out)


class LogSoftmax(Layer):
    """Row-wise log-softmax; rows of exp(output) sum to 1."""

    def forward(self, x, train=False, rng=None):
        x = check_matrix(x)
        shifted = x - x.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        if train:
            self._push(np.exp(logp))
        return logp

    def backward(self, grad_out):
        softmax = self._pop()
        grad_out = np.asarray(grad_out)
        return grad_out - softmax * grad_out.sum(axis=1, keepdims=True)


class Sequential:
    """Ordered layer chain with named parameters ("<index>.<name>")."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_params(self, prefix=""):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                out.append((f"{prefix}{i}.{name}", arr))
        return out

    def named_buffers(self, prefix=""):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.buffers.items():
                out.append((f"{prefix}{i}.{name}", arr))
        return out

    def grads(self, prefix=""):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, g in layer.grads.items():
                out[f"{prefix}{i}.{name}"] = g
        return out
