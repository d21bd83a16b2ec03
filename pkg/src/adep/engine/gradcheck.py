"""Finite-difference verification of analytic gradients.

Central differences with step h compared against backward-pass gradients.
Entries where |analytic - numeric| <= ATOL are treated as matching (the
difference noise floor — dead-ReLU parameters have exactly-zero analytic
gradients and O(1e-11) numeric ones); everything else is scored by
|a - n| / max(|a|, |n|).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import GradCheckError

ATOL = 1e-6


def numerical_gradient(scalar_fn, arr, h=1e-5):
    """Central-difference gradient of scalar_fn() w.r.t. arr (perturbed in place)."""
    flat = arr.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = scalar_fn()
        flat[i] = orig - h
        f_minus = scalar_fn()
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(arr.shape)


def max_relative_error(analytic, numeric, param_name=None):
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise GradCheckError(
            f"non-finite gradient for parameter {param_name!r}", param_name
        )
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff <= ATOL, 0.0, diff / np.maximum(denom, ATOL))
    return float(rel.max()) if rel.size else 0.0


@dataclass
class GradCheckReport:
    tolerance: float
    per_param: dict = field(default_factory=dict)
    h: float = 1e-5

    @property
    def max_rel_error(self):
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance

    def worst_param(self):
        if not self.per_param:
            return None
        return max(self.per_param, key=self.per_param.get)

    def to_dict(self):
        return {
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "worst_param": self.worst_param(),
            "tolerance": self.tolerance,
            "step": self.h,
            "per_param": dict(sorted(self.per_param.items())),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def compare_gradients(analytic, scalar_fn, named_params, h=1e-5, tolerance=1e-4):
    """Score analytic gradients for named_params against finite differences
    of scalar_fn(); parameters missing from `analytic` count as zero."""
    report = GradCheckReport(tolerance=tolerance, h=h)
    for name, arr in named_params:
        numeric = numerical_gradient(scalar_fn, arr, h=h)
        ana = analytic.get(name)
        if ana is None:
            ana = np.zeros_like(arr)
        report.per_param[name] = max_relative_error(ana, numeric, name)
    return report


def clear_caches(network):
    """Drop pending forward caches (finite-difference passes never backward)."""
    for layer in network.layers:
        layer._cache.clear()


def grad_check(network, loss_fn, x, target, h=1e-5, tolerance=1e-4):
    """Check a Sequential + loss against finite differences.

    loss_fn(prediction, target) must return a LossValue. The network is
    forwarded in train mode, so dropout layers must have rate 0 and the
    batch must satisfy BatchNorm's >= 2 rows.
    """
    network.zero_grad()
    out = network.forward(x, train=True)
    lv = loss_fn(out, target)
    network.backward(lv.grad)
    analytic = network.grads()

    def scalar():
        value = loss_fn(network.forward(x, train=True), target).value
        clear_caches(network)
        return value

    report = compare_gradients(analytic, scalar, network.named_params(), h, tolerance)
    clear_caches(network)
    return report
