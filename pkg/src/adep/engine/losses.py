"""Loss functions returning the scalar value and its input gradient."""

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, LabelError

BCE_CLAMP = 1e-7


@dataclass
class LossValue:
    """Scalar loss plus the gradient w.r.t. the loss input."""

    value: float
    grad: np.ndarray


def mae_loss(prediction, target):
    """Mean absolute error over all elements; gradient sign(pred-target)/N
    with sign(0) = 0."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise DimensionError(
            f"prediction {prediction.shape} vs target {target.shape}"
        )
    diff = prediction - target
    n = diff.size
    value = float(np.abs(diff).sum() / n)
    return LossValue(value, np.sign(diff) / n)


def nll_loss(log_probs, labels):
    """Mean negative log-likelihood of the true class, on log-probability rows."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    labels = np.asarray(labels)
    if log_probs.ndim != 2:
        raise DimensionError(f"log_probs must be 2-D, got {log_probs.shape}")
    n, c = log_probs.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c})")
    rows = np.arange(n)
    value = float(-log_probs[rows, labels].sum() / n)
    grad = np.zeros_like(log_probs)
    grad[rows, labels] = -1.0 / n
    return LossValue(value, grad)


def bce_loss(probabilities, labels):
    """Binary cross-entropy on probabilities in (0,1), clamped to
    [BCE_CLAMP, 1-BCE_CLAMP]; gradient is zero where the clamp is active.

    labels may be an array of {0,1} or a scalar broadcast over the batch.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[1] != 1:
        raise DimensionError(f"probabilities must have shape (B, 1), got {p.shape}")
    n = p.shape[0]
    y = np.broadcast_to(np.asarray(labels, dtype=np.float64).reshape(-1, 1), p.shape)
    if np.asarray(labels).ndim > 0 and np.asarray(labels).shape[0] not in (1, n):
        raise DimensionError(f"labels length does not match batch {n}")
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    value = float(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum() / n)
    inside = (p >= BCE_CLAMP) & (p <= 1.0 - BCE_CLAMP)
    grad = np.where(inside, -(y / pc - (1.0 - y) / (1.0 - pc)) / n, 0.0)
    return LossValue(value, grad)
