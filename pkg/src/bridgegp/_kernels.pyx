# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise loops for the anisotropic Gaussian kernel.

Mirrors ``bridgegp._kernels_py`` exactly; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def kernel_matrix(const double[:, ::1] X, const double[::1] omega):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, diff
    cdef double[::1] w2 = np.empty(d)
    out = np.empty((n, n))
    cdef double[:, ::1] K = out
    for k in range(d):
        w2[k] = omega[k] * omega[k]
    with nogil:
        for i in range(n):
            K[i, i] = 1.0
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    diff = X[i, k] - X[j, k]
                    s = s + w2[k] * diff * diff
                s = exp(-s)
                K[i, j] = s
                K[j, i] = s
    return out


def cross_kernel(const double[:, ::1] A, const double[:, ::1] B, const double[::1] omega):
    cdef Py_ssize_t m = A.shape[0], n = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, diff
    cdef double[::1] w2 = np.empty(d)
    out = np.empty((m, n))
    cdef double[:, ::1] K = out
    for k in range(d):
        w2[k] = omega[k] * omega[k]
    with nogil:
        for i in range(m):
            for j in range(n):
                s = 0.0
                for k in range(d):
                    diff = A[i, k] - B[j, k]
                    s = s + w2[k] * diff * diff
                K[i, j] = exp(-s)
    return out


def sqdist_contract(const double[:, ::1] X, const double[:, ::1] M):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double m, diff
    out = np.zeros(d)
    cdef double[::1] acc = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                m = M[i, j] + M[j, i]
                for k in range(d):
                    diff = X[i, k] - X[j, k]
                    acc[k] = acc[k] + m * diff * diff
    return out
