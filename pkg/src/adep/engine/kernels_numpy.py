"""numpy fallback implementations of the hot kernels.

Semantically identical to the compiled backend; floating-point summation
order differs (BLAS), so results agree to rounding, not bitwise.
"""

import numpy as np

name = "numpy"


def matmul(a, b):
    return a @ b


def matmul_nt(a, b):
    return a @ b.T


def matmul_tn(a, b):
    return a.T @ b


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
