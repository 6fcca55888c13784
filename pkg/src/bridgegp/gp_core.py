"""Gaussian process model with a polynomial mean and an anisotropic Gaussian kernel.

The model is ``y = G beta + Z + eps`` with ``Z ~ GP(0, tau2 * K(.,.; omega))``
and ``eps ~ N(0, tau2 * eta)``.  Everything here is a pure function of its
arguments; the samplers in :mod:`bridgegp.gibbs` call the lower-level helpers
(``build_kernel_bundle``, ``quad_form`` and friends) directly to avoid rebuilding
design matrices on every step.
"""
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from . import _backend
from .errors import DimensionError, DomainError, NumericError, RankDeficiencyError

LOG_2PI = np.log(2.0 * np.pi)

JITTER_START = 1e-10
JITTER_FACTOR = 10.0
JITTER_RETRIES = 6

DEGREES = ("constant", "linear", "quadratic")


@dataclass
class Dataset:
    """Design matrix, responses and per-column ranges used for unit scaling.

    ``column_ranges`` defaults to the observed column min/max (widened to a
    unit interval for constant columns).
    """

    X: np.ndarray
    y: np.ndarray
    column_ranges: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"X must be a non-empty n x d matrix, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DimensionError(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("X and y must be finite")
        if self.column_ranges is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            flat = hi <= lo
            hi = np.where(flat, lo + 1.0, hi)
            ranges = np.column_stack([lo, hi])
        else:
            ranges = np.asarray(self.column_ranges, dtype=float).reshape(-1, 2)
            if ranges.shape[0] != X.shape[1]:
                raise DimensionError(
                    f"{ranges.shape[0]} column ranges supplied for {X.shape[1]} columns"
                )
        if not np.all(ranges[:, 0] < ranges[:, 1]):
            raise DomainError("every column range needs lo < hi")
        self.X = np.ascontiguousarray(X)
        self.y = y
        self.column_ranges = ranges

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def scale(self, X=None):
        """Map physical inputs to the unit cube using ``column_ranges``."""
        X = self.X if X is None else np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.column_ranges[:, 0], self.column_ranges[:, 1]
        return (X - lo) / (hi - lo)

    def descale(self, U):
        lo, hi = self.column_ranges[:, 0], self.column_ranges[:, 1]
        return np.asarray(U, dtype=float) * (hi - lo) + lo

    def scaled(self):
        """Return a copy whose inputs live in [0, 1]^d (ranges become unit)."""
        unit = np.column_stack([np.zeros(self.d), np.ones(self.d)])
        return Dataset(self.scale(), self.y.copy(), unit)


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial mean basis.

    Terms are ordered intercept, ``x1..xd``, then ``x1^2, x1 x2, ..., x1 xd,
    x2^2, ..., xd^2``.
    """

    degree: str
    d: int

    def __post_init__(self):
        if self.degree not in DEGREES:
            raise DomainError(f"basis degree must be one of {DEGREES}, got {self.degree!r}")
        if self.d < 1:
            raise DomainError("basis dimension must be >= 1")

    @property
    def p(self):
        if self.degree == "constant":
            return 1
        if self.degree == "linear":
            return 1 + self.d
        return 1 + self.d + self.d * (self.d + 1) // 2

    def _pairs(self):
        return list(combinations_with_replacement(range(self.d), 2))

    def term_orders(self):
        """Polynomial order of each basis term (0 for the intercept)."""
        orders = [0]
        if self.degree != "constant":
            orders += [1] * self.d
        if self.degree == "quadratic":
            orders += [2] * len(self._pairs())
        return np.array(orders)

    def term_names(self, names=None):
        names = list(names) if names is not None else [f"x{k + 1}" for k in range(self.d)]
        out = ["1"]
        if self.degree != "constant":
            out += names
        if self.degree == "quadratic":
            out += [f"{names[i]}^2" if i == j else f"{names[i]}*{names[j]}" for i, j in self._pairs()]
        return out

    def design_matrix(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DimensionError(f"basis expects {self.d} inputs, got {X.shape[1]}")
        cols = [np.ones(X.shape[0])]
        if self.degree != "constant":
            cols += [X[:, k] for k in range(self.d)]
        if self.degree == "quadratic":
            cols += [X[:, i] * X[:, j] for i, j in self._pairs()]
        return np.column_stack(cols)


def expand_basis(x, spec):
    """Evaluate the basis vector g(x) for a single input point."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != spec.d:
        raise DimensionError(f"basis expects {spec.d} inputs, got {x.shape[0]}")
    return spec.design_matrix(x[None, :])[0]


@dataclass
class GPParams:
    beta: np.ndarray
    omega: np.ndarray
    tau2: float
    eta: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.omega = np.asarray(self.omega, dtype=float).ravel()
        self.tau2 = float(self.tau2)
        self.eta = float(self.eta)
        if not (self.tau2 > 0 and self.eta >= 0):
            raise DomainError(f"need tau2 > 0 and eta >= 0, got tau2={self.tau2}, eta={self.eta}")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.omega))):
            raise DomainError("beta and omega must be finite")


@dataclass(frozen=True)
class KernelMatrixBundle:
    """Factored ``K_n + eta I`` (plus any stabilizing jitter)."""

    Kn_plus_etaI: np.ndarray
    chol: np.ndarray
    logdet: float
    jitter: float = 0.0
    K: np.ndarray = field(default=None, repr=False)

    def solve(self, b):
        return scipy.linalg.cho_solve((self.chol, True), b, check_finite=False)

    def inverse(self):
        inv, info = lapack.dpotri(self.chol, lower=1)
        if info != 0:
            raise NumericError("inverse from Cholesky factor failed", {"info": int(info)})
        return np.tril(inv) + np.tril(inv, -1).T


@dataclass
class PredictiveResult:
    mean: np.ndarray
    variance: np.ndarray
    n_clamped: int = 0
    method: str = "plug-in"


def kernel(xi, xj, omega):
    """Anisotropic Gaussian correlation between two points."""
    xi, xj, omega = (np.asarray(a, dtype=float).ravel() for a in (xi, xj, omega))
    if not (xi.shape == xj.shape == omega.shape):
        raise DimensionError("xi, xj and omega must have the same length")
    return float(np.exp(-np.sum(omega**2 * (xi - xj) ** 2)))


def kernel_matrix(X, omega):
    return _backend.kernel_matrix(
        np.ascontiguousarray(X, dtype=float), np.ascontiguousarray(omega, dtype=float)
    )


def cross_kernel(A, B, omega):
    return _backend.cross_kernel(
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(B, dtype=float),
        np.ascontiguousarray(omega, dtype=float),
    )


def factor_with_jitter(M, retries=JITTER_RETRIES):
    """Cholesky-factor a symmetric matrix, adding diagonal jitter on failure.

    Returns ``(lower_factor, jitter)``.  The jitter ladder starts at
    ``1e-10 * mean(diag)`` and grows tenfold per retry.
    """
    base = JITTER_START * float(np.mean(np.diag(M)))
    jitter = 0.0
    for attempt in range(retries + 1):
        A = M if jitter == 0.0 else M + jitter * np.eye(M.shape[0])
        L, info = lapack.dpotrf(A, lower=1, clean=1)
        if info == 0:
            return L, jitter
        jitter = base * JITTER_FACTOR**attempt
    diag = np.diag(M)
    try:
        eig = np.linalg.eigvalsh(M)
        diagnostics = {"min_eig": float(eig[0]), "max_eig": float(eig[-1])}
    except np.linalg.LinAlgError:
        diagnostics = {}
    diagnostics.update(
        {"n": int(M.shape[0]), "mean_diag": float(np.mean(diag)), "last_jitter": float(jitter)}
    )
    raise NumericError("Cholesky factorization failed after the full jitter ladder", diagnostics)


def build_kernel_bundle(X, omega, eta):
    """Assemble and factor ``K_n + eta I``."""
    if eta < 0:
        raise DomainError(f"eta must be >= 0, got {eta}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    omega = np.asarray(omega, dtype=float).ravel()
    if omega.shape[0] != X.shape[1]:
        raise DimensionError(f"omega has {omega.shape[0]} entries for {X.shape[1]} inputs")
    if not np.all(np.isfinite(omega)) or not np.isfinite(eta):
        raise NumericError("non-finite kernel hyperparameters", {"omega": omega.tolist(), "eta": eta})
    K = kernel_matrix(X, omega)
    M = K.copy()
    M[np.diag_indices_from(M)] += eta
    L, jitter = factor_with_jitter(M)
    if jitter:
        M[np.diag_indices_from(M)] += jitter
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return KernelMatrixBundle(M, L, logdet, jitter, K)


def quad_form(bundle, r):
    """Return ``r^T (K_n + eta I)^{-1} r`` and the solve ``(K_n + eta I)^{-1} r``."""
    alpha = bundle.solve(r)
    return float(r @ alpha), alpha


def _as_arrays(data, spec):
    if spec.d != data.d:
        raise DimensionError(f"basis is for d={spec.d} but data has d={data.d}")
    return data.X, spec.design_matrix(data.X), data.y


def neg_log_likelihood(data, spec, params):
    """Full Gaussian negative log-likelihood including the ``n/2 log 2 pi`` constant."""
    X, G, y = _as_arrays(data, spec)
    bundle = build_kernel_bundle(X, params.omega, params.eta)
    resid = y - G @ params.beta
    S2, _ = quad_form(bundle, resid)
    n = data.n
    return 0.5 * n * LOG_2PI + 0.5 * n * np.log(params.tau2) + 0.5 * bundle.logdet + 0.5 * S2 / params.tau2


def omega_potential(X, resid, omega, tau2, eta):
    """``0.5 logdet(K + eta I) + S^2 / (2 tau2)`` together with its bundle and ``S^2``."""
    bundle = build_kernel_bundle(X, omega, eta)
    S2, alpha = quad_form(bundle, resid)
    return 0.5 * bundle.logdet + 0.5 * S2 / tau2, bundle, S2, alpha


def omega_gradient(X, bundle, alpha, omega, tau2):
    """Gradient of :func:`omega_potential` in omega given a built bundle.

    Uses ``dK/domega_k = K * (-2 omega_k dx_k^2)`` so that
    ``g_k = -omega_k * sum_ij W_ij K_ij dx_ijk^2`` with
    ``W = (K + eta I)^{-1} - alpha alpha^T / tau2``.
    """
    W = bundle.inverse()
    W -= np.outer(alpha, alpha) / tau2
    W *= bundle.K
    return -np.asarray(omega, dtype=float) * _backend.sqdist_contract(np.ascontiguousarray(X), W)


def grad_negloglik_omega(data, spec, params):
    X, G, y = _as_arrays(data, spec)
    resid = y - G @ params.beta
    _, bundle, _, alpha = omega_potential(X, resid, params.omega, params.tau2, params.eta)
    return omega_gradient(X, bundle, alpha, params.omega, params.tau2)


def predict(data, spec, params, Xquery):
    """Plug-in predictive mean and variance at the rows of ``Xquery``.

    Variances below zero (round-off near training points) are clamped and
    counted in ``PredictiveResult.n_clamped``.
    """
    X, G, y = _as_arrays(data, spec)
    Xq = np.atleast_2d(np.asarray(Xquery, dtype=float))
    if Xq.shape[1] != data.d:
        raise DimensionError(f"query points need {data.d} columns, got {Xq.shape[1]}")
    bundle = build_kernel_bundle(X, params.omega, params.eta)
    return _predict_with_bundle(bundle, X, G, y, spec, params, Xq)


def _predict_with_bundle(bundle, X, G, y, spec, params, Xq):
    Kq = cross_kernel(Xq, X, params.omega)
    alpha = bundle.solve(y - G @ params.beta)
    mean = spec.design_matrix(Xq) @ params.beta + Kq @ alpha
    V = scipy.linalg.solve_triangular(bundle.chol, Kq.T, lower=True, check_finite=False)
    var = params.tau2 * (1.0 - np.einsum("ij,ij->j", V, V))
    neg = var < 0
    var[neg] = 0.0
    return PredictiveResult(mean, var, int(np.count_nonzero(neg)))


def gls_moments(G, y, bundle, tau2):
    """Return ``(mean, cov)`` of the unconstrained Gaussian beta conditional."""
    AG = bundle.solve(G)
    GtAG = G.T @ AG
    GtAG = 0.5 * (GtAG + GtAG.T)
    L, info = lapack.dpotrf(GtAG, lower=1, clean=1)
    if info != 0 or np.min(np.abs(np.diag(L))) < 1e-7 * np.sqrt(np.max(np.diag(GtAG))):
        raise RankDeficiencyError(
            "G^T A G is singular; the basis is rank deficient on these inputs",
            columns=_dependent_columns(G),
        )
    mean = scipy.linalg.cho_solve((L, True), AG.T @ y, check_finite=False)
    cov = tau2 * scipy.linalg.cho_solve((L, True), np.eye(G.shape[1]), check_finite=False)
    return mean, cov


def _dependent_columns(G, tol=1e-10):
    """Indices of basis columns that are (numerically) linear combinations of earlier ones."""
    _, R, piv = scipy.linalg.qr(G, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * scale))
    return sorted(int(c) for c in piv[rank:])


def beta_conditional_moments(data, spec, omega, tau2, eta):
    X, G, y = _as_arrays(data, spec)
    if spec.p > data.n:
        raise RankDeficiencyError(
            f"basis has p={spec.p} terms but only n={data.n} rows",
            columns=list(range(data.n, spec.p)),
        )
    bundle = build_kernel_bundle(X, omega, eta)
    return gls_moments(G, y, bundle, tau2)
