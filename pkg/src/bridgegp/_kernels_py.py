"""Pure numpy implementation of the pairwise kernel loops.

Every function here has a compiled twin in ``_kernels.pyx``; the two must
agree to round-off.
"""
import numpy as np


def kernel_matrix(X, omega):
    """Return K with K[i, j] = exp(-sum_k omega_k^2 (X[i, k] - X[j, k])^2)."""
    Xw = X * omega
    diff = Xw[:, None, :] - Xw[None, :, :]
    K = np.exp(-np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(K, 1.0)
    return K


def cross_kernel(A, B, omega):
    """Return the m x n kernel between the rows of A and the rows of B."""
    diff = (A * omega)[:, None, :] - (B * omega)[None, :, :]
    return np.exp(-np.einsum("ijk,ijk->ij", diff, diff))


def sqdist_contract(X, M):
    """Return s with s[k] = sum_ij M[i, j] (X[i, k] - X[j, k])^2."""
    # sum_ij M_ij (x_i - x_j)^2 = sum_i x_i^2 (r_i + c_i) - 2 x^T M_s x, M_s symmetric part
    Ms = 0.5 * (M + M.T)
    row = Ms.sum(axis=1)
    return 2.0 * (X * X).T @ row - 2.0 * np.einsum("ik,ik->k", X, Ms @ X)
