"""Test functions, the prespecified GP simulator and inert-input padding."""
import warnings
from dataclasses import dataclass

import numpy as np

from .design import maximin_lhs, random_lhs
from .errors import DomainError, NumericError
from .gp_core import BasisSpec, Dataset, factor_with_jitter, kernel_matrix

BOREHOLE_RANGES = np.array(
    [
        [0.05, 0.15],  # r_w
        [100.0, 50000.0],  # r
        [63070.0, 115600.0],  # T_u
        [990.0, 1110.0],  # H_u
        [63.1, 116.0],  # T_l
        [700.0, 820.0],  # H_l
        [1120.0, 1680.0],  # L
        [9855.0, 12045.0],  # K_w
    ]
)
BOREHOLE_NAMES = ("r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w")

OTL_RANGES = np.array(
    [
        [50.0, 150.0],  # R_b1
        [25.0, 70.0],  # R_b2
        [0.5, 3.0],  # R_f
        [1.2, 2.5],  # R_c1
        [0.25, 1.2],  # R_c2
        [50.0, 300.0],  # beta
    ]
)
OTL_NAMES = ("R_b1", "R_b2", "R_f", "R_c1", "R_c2", "beta")

PISTON_RANGES = np.array(
    [
        [30.0, 60.0],  # M
        [0.005, 0.020],  # S
        [0.002, 0.010],  # V_0
        [1000.0, 5000.0],  # k
        [90000.0, 110000.0],  # P_0
        [290.0, 296.0],  # T_a
        [340.0, 360.0],  # T_0
    ]
)
PISTON_NAMES = ("M", "S", "V_0", "k", "P_0", "T_a", "T_0")

PRESPECIFIED_BETA = np.array([3.0, -2.0, 2.0, -4.0, 4.0, 3.0])
PRESPECIFIED_OMEGA = np.array([1.0, 1.5, 2.0, 2.5, 3.0])
PRESPECIFIED_TAU2 = 1.0


def _check_ranges(x, ranges, name):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != ranges.shape[0]:
        raise DomainError(f"{name} takes {ranges.shape[0]} inputs, got {x.shape[1]}")
    tol = 1e-9 * (ranges[:, 1] - ranges[:, 0])
    if np.any(x < ranges[:, 0] - tol) or np.any(x > ranges[:, 1] + tol):
        warnings.warn(f"{name} evaluated outside its input ranges", RuntimeWarning, stacklevel=3)
    return x


def _squeeze(out, x):
    return float(out[0]) if np.ndim(x) == 1 else out


def eval_borehole(x):
    """Water flow rate through a borehole; ``x`` has columns in ``BOREHOLE_NAMES`` order."""
    X = _check_ranges(x, BOREHOLE_RANGES, "borehole")
    rw, r, Tu, Hu, Tl, Hl, L, Kw = X.T
    if np.any(r <= rw):
        raise DomainError("borehole requires r > r_w")
    lr = np.log(r / rw)
    out = 2.0 * np.pi * Tu * (Hu - Hl) / (lr * (1.0 + 2.0 * L * Tu / (lr * rw**2 * Kw) + Tu / Tl))
    return _squeeze(out, x)


def eval_otl(x):
    """Midpoint voltage of an output transformerless push-pull circuit."""
    X = _check_ranges(x, OTL_RANGES, "otl_circuit")
    Rb1, Rb2, Rf, Rc1, Rc2, b = X.T
    Vb1 = 12.0 * Rb2 / (Rb1 + Rb2)
    bR = b * (Rc2 + 9.0)
    den = bR + Rf
    out = (Vb1 + 0.74) * bR / den + 11.35 * Rf / den + 0.74 * Rf * bR / (den * Rc1)
    return _squeeze(out, x)


def eval_piston(x):
    """Cycle time of a piston in a cylinder."""
    X = _check_ranges(x, PISTON_RANGES, "piston")
    M, S, V0, k, P0, Ta, T0 = X.T
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2.0 * k) * (np.sqrt(A**2 + 4.0 * k * P0 * V0 / T0 * Ta) - A)
    if np.any(V <= 0):
        raise NumericError("piston volume is non-positive", {"min_V": float(np.min(V))})
    out = 2.0 * np.pi * np.sqrt(M / (k + S**2 * P0 * V0 / T0 * Ta / V**2))
    return _squeeze(out, x)


@dataclass(frozen=True)
class BenchmarkFunction:
    """A test function over a box, optionally padded with inert inputs.

    ``ranges`` covers all ``d`` inputs; padded inputs have range ``[0, 1]``
    and are dropped before evaluation.
    """

    name: str
    d_native: int
    func: object
    native_ranges: np.ndarray
    input_names: tuple
    d_padded: int = None

    @property
    def d(self):
        return self.d_padded or self.d_native

    @property
    def ranges(self):
        pad = self.d - self.d_native
        return np.vstack([self.native_ranges, np.tile([0.0, 1.0], (pad, 1))]) if pad else self.native_ranges.copy()

    @property
    def names(self):
        return tuple(self.input_names) + tuple(f"inert_{k + 1}" for k in range(self.d - self.d_native))

    def __call__(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        if X.shape[1] != self.d:
            raise DomainError(f"{self.name} takes {self.d} inputs, got {X.shape[1]}")
        out = self.func(X[:, : self.d_native])
        return _squeeze(out, x)

    def from_unit(self, U):
        r = self.ranges
        return r[:, 0] + np.asarray(U, dtype=float) * (r[:, 1] - r[:, 0])

    def midpoint(self):
        return self.ranges.mean(axis=1)


BENCHMARKS = {
    "borehole": BenchmarkFunction("borehole", 8, eval_borehole, BOREHOLE_RANGES, BOREHOLE_NAMES),
    "otl_circuit": BenchmarkFunction("otl_circuit", 6, eval_otl, OTL_RANGES, OTL_NAMES),
    "piston": BenchmarkFunction("piston", 7, eval_piston, PISTON_RANGES, PISTON_NAMES),
}
NAMES = ("borehole", "otl_circuit", "piston", "prespecified_gp")


def get_benchmark(name):
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise DomainError(f"unknown benchmark {name!r}; choose from {NAMES}") from None


def pad_inert_dimensions(f, d_target):
    if d_target < f.d_native:
        raise DomainError(f"d_target={d_target} is below the native dimension {f.d_native}")
    return BenchmarkFunction(f.name, f.d_native, f.func, f.native_ranges, f.input_names, d_target)


def _seeds(seed, k):
    return np.random.SeedSequence(seed).spawn(k)


def simulate_benchmark(f, n_train, n_test, seed, noise_frac=0.01, restarts=10):
    """Training (maximin LHS) and test (random LHS) sets with Gaussian noise.

    The noise sd is ``noise_frac`` times the sd of ``f`` over the training
    design and is applied to both sets.
    """
    s_train, s_test, s_noise = _seeds(seed, 3)
    Xtr = f.from_unit(maximin_lhs(n_train, f.d, s_train, restarts=restarts))
    Xte = f.from_unit(random_lhs(n_test, f.d, s_test))
    ftr, fte = f(Xtr), f(Xte)
    sd = noise_frac * float(np.std(ftr))
    rng = np.random.default_rng(s_noise)
    ytr = ftr + sd * rng.standard_normal(n_train)
    yte = fte + sd * rng.standard_normal(n_test)
    ranges = f.ranges
    return Dataset(Xtr, ytr, ranges), Dataset(Xte, yte, ranges)


def simulate_prespecified_gp(n_train=200, n_test=1000, seed=0, omega=None, beta=None, tau2=None, restarts=10):
    """One GP realization over a maximin training design and a random test design in [0, 1]^5."""
    omega = PRESPECIFIED_OMEGA if omega is None else np.asarray(omega, dtype=float)
    beta = PRESPECIFIED_BETA if beta is None else np.asarray(beta, dtype=float)
    tau2 = PRESPECIFIED_TAU2 if tau2 is None else float(tau2)
    d = omega.size
    s_train, s_test, s_field = _seeds(seed, 3)
    Xtr = maximin_lhs(n_train, d, s_train, restarts=restarts)
    Xte = random_lhs(n_test, d, s_test)
    X = np.vstack([Xtr, Xte])
    y = sample_gp_field(X, beta, omega, tau2, np.random.default_rng(s_field))
    unit = np.tile([0.0, 1.0], (d, 1))
    return Dataset(Xtr, y[:n_train], unit), Dataset(Xte, y[n_train:], unit)


def sample_gp_field(X, beta, omega, tau2, rng):
    """Joint draw of ``G beta + Z`` at the rows of ``X`` with a linear mean basis."""
    G = BasisSpec("linear", X.shape[1]).design_matrix(X)
    K = kernel_matrix(X, omega)
    L, _ = factor_with_jitter(K)
    return G @ beta + np.sqrt(tau2) * (L @ rng.standard_normal(X.shape[0]))
