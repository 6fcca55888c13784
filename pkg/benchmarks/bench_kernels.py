"""Time the compiled kernel routines against the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat R]``
"""
import argparse
import timeit

import numpy as np

from bridgegp import _kernels_py

try:
    from bridgegp import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(rng):
    for n, d in ((100, 5), (200, 8), (200, 20), (500, 20)):
        X = rng.random((n, d))
        w = rng.uniform(0.1, 2.0, d)
        Q = rng.random((1000, d))
        M = rng.standard_normal((n, n))
        yield n, d, X, w, Q, M + M.T


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'routine':<16}{'n':>5}{'d':>4}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for n, d, X, w, Q, M in _cases(rng):
        calls = {
            "kernel_matrix": lambda m: m.kernel_matrix(X, w),
            "cross_kernel": lambda m: m.cross_kernel(Q, X, w),
            "sqdist_contract": lambda m: m.sqdist_contract(X, M),
        }
        for name, fn in calls.items():
            t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=3, repeat=args.repeat)) / 3
            t_cy = min(timeit.repeat(lambda: fn(_compiled), number=3, repeat=args.repeat)) / 3
            print(f"{name:<16}{n:>5}{d:>4}{1e3 * t_py:>12.3f}{1e3 * t_cy:>12.3f}{t_py / t_cy:>9.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
