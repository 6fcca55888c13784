"""Latin hypercube designs on the unit cube."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DomainError

KINDS = ("random_lhs", "maximin_lhs")


@dataclass(frozen=True)
class DesignSpec:
    n: int
    d: int
    kind: str = "random_lhs"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise DomainError(f"design needs n >= 2 and d >= 1, got n={self.n}, d={self.d}")
        if self.kind not in KINDS:
            raise DomainError(f"design kind must be one of {KINDS}, got {self.kind!r}")


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def random_lhs(n, d, seed=None):
    """Random Latin hypercube: one point per stratum ``[k/n, (k+1)/n)`` in every column.

    ``seed`` may be an integer, a ``SeedSequence`` or a ``Generator``.
    """
    rng = _rng(seed)
    X = np.empty((n, d))
    for k in range(d):
        X[:, k] = (rng.permutation(n) + rng.random(n)) / n
    return X


def min_distance(X):
    return float(pdist(X).min()) if X.shape[0] > 1 else np.inf


def maximin_lhs(n, d, seed=None, restarts=10, swap_budget=None):
    """Maximin Latin hypercube by best-of-restarts plus greedy column swaps.

    The first restart is exactly ``random_lhs(n, d, seed)``.  Each swap
    exchanges one coordinate between a point of the closest pair and a
    random other point and is kept only if the minimum distance grows, so
    stratification is preserved and the minimum distance never decreases.

    Parameters
    ----------
    swap_budget : int, optional
        Number of attempted swaps; defaults to ``10 * n * d``.
    """
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    rng = _rng(seed)
    best, best_d = None, -np.inf
    for _ in range(restarts):
        X = random_lhs(n, d, rng)
        dm = min_distance(X)
        if dm > best_d:
            best, best_d = X, dm
    budget = 10 * n * d if swap_budget is None else int(swap_budget)
    if budget <= 0 or n < 3:
        return best
    return _improve(best, budget, rng)


def _improve(X, budget, rng):
    X = X.copy()
    n, d = X.shape
    D2 = squareform(pdist(X, "sqeuclidean"))
    np.fill_diagonal(D2, np.inf)
    current = D2.min()
    for _ in range(budget):
        i, j = np.unravel_index(np.argmin(D2), D2.shape)
        a = i if rng.random() < 0.5 else j
        k = int(rng.integers(n - 1))
        k += k >= a
        c = int(rng.integers(d))
        X[[a, k], c] = X[[k, a], c]
        ra = np.sum((X - X[a]) ** 2, axis=1)
        rk = np.sum((X - X[k]) ** 2, axis=1)
        ra[a] = np.inf
        rk[k] = np.inf
        old_a, old_k = D2[a].copy(), D2[k].copy()
        D2[a], D2[:, a] = ra, ra
        D2[k], D2[:, k] = rk, rk
        D2[a, k] = D2[k, a] = ra[k]
        new = D2.min()
        if new > current:
            current = new
        else:
            X[[a, k], c] = X[[k, a], c]
            D2[a], D2[:, a] = old_a, old_a
            D2[k], D2[:, k] = old_k, old_k
            D2[a, k] = D2[k, a] = old_a[k]
    return X


def generate(spec):
    """Design for a :class:`DesignSpec`."""
    if spec.kind == "random_lhs":
        return random_lhs(spec.n, spec.d, spec.seed)
    return maximin_lhs(spec.n, spec.d, spec.seed)
