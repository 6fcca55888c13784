import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgegp.design import DesignSpec, generate, maximin_lhs, min_distance, random_lhs
from bridgegp.errors import DomainError


def _stratified(X):
    n = X.shape[0]
    return all(sorted(np.floor(X[:, k] * n).astype(int)) == list(range(n)) for k in range(X.shape[1]))


@given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_random_lhs_stratified(n, d, seed):
    X = random_lhs(n, d, seed)
    assert X.shape == (n, d) and _stratified(X)
    assert X.min() >= 0 and X.max() < 1


@given(st.integers(3, 20), st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_maximin_stratified_and_no_worse(n, d, seed):
    X = maximin_lhs(n, d, seed, restarts=3)
    assert _stratified(X)
    assert min_distance(X) >= min_distance(random_lhs(n, d, seed)) - 1e-15


def test_two_points_one_dimension():
    X = random_lhs(2, 1, 5)
    assert sorted(np.floor(X[:, 0] * 2)) == [0, 1]


def test_deterministic():
    assert random_lhs(10, 3, 7).tobytes() == random_lhs(10, 3, 7).tobytes()
    assert maximin_lhs(10, 3, 7).tobytes() == maximin_lhs(10, 3, 7).tobytes()


def test_degenerate_budget_equals_random():
    assert np.array_equal(maximin_lhs(12, 3, 4, restarts=1, swap_budget=0), random_lhs(12, 3, 4))


def test_min_distance_monotone_in_budget():
    vals = [min_distance(maximin_lhs(15, 3, 2, restarts=1, swap_budget=b)) for b in (0, 5, 20, 80, 300)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0]


def test_one_dimensional_gap():
    # every 1-D permutation gives the same sorted point set, so the
    # exhaustive optimum is the design itself
    X = maximin_lhs(4, 1, 3)
    v = np.sort(X[:, 0])
    best = max(np.min(np.diff(np.sort(np.array(p)))) for p in itertools.permutations(v))
    assert min_distance(X) == pytest.approx(best)
    assert 0 < best < 0.5


def test_spec_validation_and_generate():
    with pytest.raises(DomainError):
        DesignSpec(1, 2)
    with pytest.raises(DomainError):
        DesignSpec(5, 2, kind="sobol")
    assert np.array_equal(generate(DesignSpec(6, 2, "random_lhs", 1)), random_lhs(6, 2, 1))
    assert np.array_equal(generate(DesignSpec(6, 2, "maximin_lhs", 1)), maximin_lhs(6, 2, 1))
