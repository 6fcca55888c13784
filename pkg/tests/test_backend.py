import os
import subprocess
import sys

import numpy as np
import pytest

from bridgegp import _backend, _kernels_py

compiled = pytest.importorskip("bridgegp._kernels")


def _data(seed, n=23, m=9, d=4):
    rng = np.random.default_rng(seed)
    return rng.random((n, d)), rng.random((m, d)), rng.uniform(0, 3, d)


@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed):
    X, Q, w = _data(seed)
    assert np.allclose(compiled.kernel_matrix(X, w), _kernels_py.kernel_matrix(X, w), rtol=1e-13, atol=1e-15)
    assert np.allclose(compiled.cross_kernel(Q, X, w), _kernels_py.cross_kernel(Q, X, w), rtol=1e-13, atol=1e-15)
    M = np.random.default_rng(seed).standard_normal((X.shape[0], X.shape[0]))
    M = M + M.T
    assert np.allclose(compiled.sqdist_contract(X, M), _kernels_py.sqdist_contract(X, M), rtol=1e-11)


def test_compiled_selected_by_default():
    assert _backend.BACKEND == "cython"


def test_environment_forces_python_fallback():
    env = dict(os.environ, BRIDGEGP_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from bridgegp import _backend; print(_backend.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
