"""Layer forward/backward behavior, including finite-difference checks."""

import numpy as np
import pytest

from adep.engine import (
    BatchNorm,
    Dropout,
    Linear,
    LogSoftmax,
    ReLU,
    Sequential,
    Sigmoid,
)
from adep.engine.gradcheck import clear_caches, max_relative_error, numerical_gradient
from adep.errors import (
    ConfigError,
    DegenerateBatchError,
    DimensionError,
    MissingCacheError,
)


def projection_loss(layer, x, weights):
    """Scalar reduction sum(out * weights) for finite-difference checks."""
    out = layer.forward(x, train=True)
    layer._cache.clear()
    return float((out * weights).sum())


def fd_check_layer(layer, x, rng, h=1e-5):
    """Compare backward() against finite differences through a random
    projection, for both the input and every parameter."""
    weights = rng.standard_normal(layer.forward(x, train=True).shape)
    layer._cache.clear()
    layer.zero_grad()
    out = layer.forward(x, train=True)
    grad_in = layer.backward(weights)
    worst = max_relative_error(
        grad_in, numerical_gradient(lambda: projection_loss(layer, x, weights), x, h)
    )
    for name, param in layer.params.items():
        numeric = numerical_gradient(lambda: projection_loss(layer, x, weights), param, h)
        worst = max(worst, max_relative_error(layer.grads[name], numeric, name))
    return worst


class TestLinear:
    def test_identity_forward(self, rng):
        layer = Linear(2, 2, rng)
        layer.params["weight"][:] = np.eye(2)
        layer.params["bias"][:] = 0.0
        out = layer.forward(np.array([[1.0, 2.0]]))
        assert np.array_equal(out, [[1.0, 2.0]])

    def test_identity_backward(self, rng):
        layer = Linear(2, 2, rng)
        layer.params["weight"][:] = np.eye(2)
        layer.params["bias"][:] = 0.0
        layer.forward(np.array([[3.0, -1.0]]), train=True)
        grad_in = layer.backward(np.array([[1.0, 0.0]]))
        assert np.array_equal(grad_in, [[1.0, 0.0]])

    def test_matches_numpy(self, rng):
        layer = Linear(7, 5, rng)
        x = rng.standard_normal((4, 7))
        expected = x @ layer.params["weight"].T + layer.params["bias"]
        assert np.allclose(layer.forward(x), expected, rtol=1e-12)

    def test_finite_differences(self, rng):
        layer = Linear(6, 4, rng)
        assert fd_check_layer(layer, rng.standard_normal((3, 6)), rng) < 1e-4

    def test_wrong_width(self, rng):
        with pytest.raises(DimensionError):
            Linear(6, 4, rng).forward(rng.standard_normal((3, 5)))

    def test_backward_before_forward(self, rng):
        with pytest.raises(MissingCacheError):
            Linear(3, 3, rng).backward(np.ones((1, 3)))


class TestBatchNorm:
    def test_train_moments(self, rng):
        # eps shifts the output variance by ~eps/sigma^2, so use
        # large-variance columns to stay inside the 1e-6 band
        layer = BatchNorm(5)
        x = rng.standard_normal((64, 5)) * 10.0 + 3.0
        out = layer.forward(x, train=True)
        assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-6)

    def test_affine_follows_gamma_beta(self, rng):
        layer = BatchNorm(4)
        layer.params["gamma"][:] = 2.5
        layer.params["beta"][:] = -1.0
        out = layer.forward(rng.standard_normal((32, 4)) * 8.0, train=True)
        assert np.all(np.abs(out.mean(axis=0) - (-1.0)) < 1e-9)
        assert np.all(np.abs(out.var(axis=0) - 2.5 ** 2) < 1e-4)

    def test_eval_uses_running_stats(self, rng):
        layer = BatchNorm(3)
        for _ in range(20):
            layer.forward(rng.standard_normal((16, 3)) * 2.0 + 5.0, train=True)
        layer._cache.clear()
        running_mean = layer.buffers["running_mean"].copy()
        x = rng.standard_normal((4, 3))
        out = layer.forward(x, train=False)
        expected = (x - running_mean) / np.sqrt(layer.buffers["running_var"] + layer.EPS)
        assert np.allclose(out, expected, rtol=1e-12)
        assert np.array_equal(layer.buffers["running_mean"], running_mean)

    def test_batch_of_one_rejected_in_train(self, rng):
        with pytest.raises(DegenerateBatchError):
            BatchNorm(3).forward(rng.standard_normal((1, 3)), train=True)
        BatchNorm(3).forward(rng.standard_normal((1, 3)), train=False)  # eval is fine

    def test_finite_differences(self, rng):
        layer = BatchNorm(4)
        layer.params["gamma"][:] = rng.uniform(0.5, 1.5, 4)
        layer.params["beta"][:] = rng.standard_normal(4)
        assert fd_check_layer(layer, rng.standard_normal((6, 4)), rng) < 1e-4


class TestReLU:
    def test_forward(self):
        out = ReLU().forward(np.array([[-1.0, 0.0, 3.0]]))
        assert np.array_equal(out, [[0.0, 0.0, 3.0]])

    def test_backward_gates_on_sign(self):
        layer = ReLU()
        layer.forward(np.array([[-1.0, 3.0]]), train=True)
        grad_in = layer.backward(np.array([[5.0, 5.0]]))
        assert np.array_equal(grad_in, [[0.0, 5.0]])


class TestDropout:
    def test_eval_mode_is_identity(self, rng):
        x = rng.standard_normal((8, 10))
        assert np.array_equal(Dropout(0.3).forward(x, train=False), x)

    def test_rate_zero_is_identity_in_train(self, rng):
        x = rng.standard_normal((8, 10))
        layer = Dropout(0.0)
        assert np.array_equal(layer.forward(x, train=True), x)
        assert np.array_equal(layer.backward(x), x)

    def test_zeroed_fraction_and_mean_preservation(self):
        rate = 0.3
        rng = np.random.default_rng(7)
        x = np.ones((200, 100))  # 2e4 entries
        out = Dropout(rate).forward(x, train=True, rng=rng)
        zeroed = (out == 0.0).mean()
        # binomial 4-sigma band around the rate
        sigma = np.sqrt(rate * (1 - rate) / x.size)
        assert abs(zeroed - rate) < 4 * sigma
        assert abs(out.mean() - 1.0) < 0.02  # survivors rescaled by 1/(1-rate)

    def test_backward_reuses_mask(self):
        rng = np.random.default_rng(0)
        layer = Dropout(0.4)
        x = np.ones((5, 6))
        out = layer.forward(x, train=True, rng=rng)
        grad_in = layer.backward(np.ones_like(x))
        assert np.array_equal(grad_in, out)  # same mask, same scaling

    def test_invalid_rate(self):
        with pytest.raises(ConfigError):
            Dropout(1.0)
        with pytest.raises(ConfigError):
            Dropout(-0.1)

    def test_train_mode_requires_rng(self, rng):
        with pytest.raises(ConfigError):
            Dropout(0.5).forward(rng.standard_normal((2, 2)), train=True)


class TestSigmoid:
    def test_range_and_extremes(self):
        out = Sigmoid().forward(np.array([[-800.0, 0.0, 800.0]]))
        assert np.all((out >= 0.0) & (out <= 1.0))
        assert out[0, 1] == 0.5
        assert np.isfinite(out).all()

    def test_finite_differences(self, rng):
        assert fd_check_layer(Sigmoid(), rng.standard_normal((4, 5)), rng) < 1e-4


class TestLogSoftmax:
    def test_rows_normalize(self, rng):
        x = rng.standard_normal((16, 9)) * 100.0
        out = LogSoftmax().forward(x)
        assert np.all(np.abs(np.exp(out).sum(axis=1) - 1.0) < 1e-9)

    def test_finite_differences(self, rng):
        assert fd_check_layer(LogSoftmax(), rng.standard_normal((4, 6)), rng) < 1e-4


class TestSequentialCacheStack:
    def test_two_forwards_backprop_in_lifo_order(self, rng):
        """A net forwarded twice (discriminator real/fake pattern) must pop
        caches LIFO; each backward must match the single-pass gradients."""
        net = Sequential([Linear(4, 3, rng), ReLU(), Linear(3, 2, rng)])
        x1 = rng.standard_normal((5, 4))
        x2 = rng.standard_normal((5, 4))
        g1 = rng.standard_normal((5, 2))
        g2 = rng.standard_normal((5, 2))

        net.zero_grad()
        net.forward(x1, train=True)
        gi1 = net.backward(g1)
        only_first = {k: v.copy() for k, v in net.grads().items()}

        net.zero_grad()
        net.forward(x2, train=True)
        gi2 = net.backward(g2)
        only_second = {k: v.copy() for k, v in net.grads().items()}

        net.zero_grad()
        net.forward(x1, train=True)
        net.forward(x2, train=True)
        gi2_stacked = net.backward(g2)
        gi1_stacked = net.backward(g1)
        assert np.allclose(gi1_stacked, gi1, rtol=1e-12)
        assert np.allclose(gi2_stacked, gi2, rtol=1e-12)
        for key, grad in net.grads().items():
            assert np.allclose(grad, only_first[key] + only_second[key], rtol=1e-12)

    def test_extra_backward_raises(self, rng):
        net = Sequential([Linear(3, 3, rng)])
        net.forward(rng.standard_normal((2, 3)), train=True)
        net.backward(np.ones((2, 3)))
        with pytest.raises(MissingCacheError):
            net.backward(np.ones((2, 3)))


def test_stacked_network_finite_differences(rng):
    """Linear+BatchNorm+ReLU chain checked end to end via a projection."""
    net = Sequential([Linear(5, 8, rng), BatchNorm(8), ReLU(), Linear(8, 3, rng)])
    x = rng.standard_normal((6, 5))
    weights = rng.standard_normal((6, 3))

    def scalar():
        value = float((net.forward(x, train=True) * weights).sum())
        clear_caches(net)
        return value

    net.zero_grad()
    net.forward(x, train=True)
    net.backward(weights)
    analytic = net.grads()
    for name, param in net.named_params():
        numeric = numerical_gradient(scalar, param)
        assert max_relative_error(analytic[name], numeric, name) < 1e-4
