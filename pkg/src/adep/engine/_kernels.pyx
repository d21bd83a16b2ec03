# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense kernels: blocked row-major matrix products and a fused
Adam update.

Self-contained (no BLAS); summation runs in ascending-k order regardless of
block size, so results are bit-deterministic. adep.engine.kernels selects
this module when it is importable and falls back to the numpy backend
otherwise.
"""

from libc.math cimport sqrt

import numpy as np

name = "cython"

# Literal block sizes in the outer loops keep a panel of the streamed
# operand resident in cache; they do not affect the accumulation order.


def matmul(double[:, ::1] a, double[:, ::1] b):
    """C[m,n] = A[m,k] @ B[k,n]."""
    cdef Py_ssize_t m = a.shape[0], kd = a.shape[1], n = b.shape[1]
    out = np.zeros((m, n))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, k, k0, kend
    cdef double aik
    with nogil:
        for k0 in range(0, kd, 256):
            kend = k0 + 256
            if kend > kd:
                kend = kd
            for i in range(m):
                for k in range(k0, kend):
                    aik = a[i, k]
                    for j in range(n):
                        c[i, j] += aik * b[k, j]
    return out


def matmul_nt(double[:, ::1] a, double[:, ::1] b):
    """C[m,n] = A[m,k] @ B[n,k]^T (row-by-row dot products)."""
    cdef Py_ssize_t m = a.shape[0], kd = a.shape[1], n = b.shape[0]
    out = np.empty((m, n))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, k, i0, iend, k4 = kd - (kd % 4)
    cdef double s0, s1, s2, s3
    with nogil:
        for i0 in range(0, m, 32):
            iend = i0 + 32
            if iend > m:
                iend = m
            for j in range(n):
                for i in range(i0, iend):
                    # 4-way unrolled dot; fixed lane order keeps it deterministic
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    s3 = 0.0
                    for k in range(0, k4, 4):
                        s0 += a[i, k] * b[j, k]
                        s1 += a[i, k + 1] * b[j, k + 1]
                        s2 += a[i, k + 2] * b[j, k + 2]
                        s3 += a[i, k + 3] * b[j, k + 3]
                    s0 = (s0 + s1) + (s2 + s3)
                    for k in range(k4, kd):
                        s0 += a[i, k] * b[j, k]
                    c[i, j] = s0
    return out


def matmul_tn(double[:, ::1] a, double[:, ::1] b):
    """C[m,n] = A[k,m]^T @ B[k,n]."""
    cdef Py_ssize_t kd = a.shape[0], m = a.shape[1], n = b.shape[1]
    out = np.zeros((m, n))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, k, i0, iend
    cdef double aki
    with nogil:
        for i0 in range(0, m, 32):
            iend = i0 + 32
            if iend > m:
                iend = m
            for k in range(kd):
                for i in range(i0, iend):
                    aki = a[k, i]
                    for j in range(n):
                        c[i, j] += aki * b[k, j]
    return out


def adam_update(double[::1] param, double[::1] grad, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double eps, double bc1, double bc2):
    """In-place Adam step on flat views; bc1/bc2 are 1 - beta^t."""
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, cm1 = 1.0 - beta1, cm2 = 1.0 - beta2
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + cm1 * g
            v[i] = beta2 * v[i] + cm2 * (g * g)
            param[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
