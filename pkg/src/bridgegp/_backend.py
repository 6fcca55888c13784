"""Pick the kernel implementation at import time.

The compiled module is used when it was built; ``BRIDGEGP_BACKEND=python``
forces the numpy fallback (handy for comparing the two).
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("BRIDGEGP_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

kernel_matrix = _impl.kernel_matrix
cross_kernel = _impl.cross_kernel
# the numpy version is two BLAS products and beats the loop from n ~ 200
sqdist_contract = _kernels_py.sqdist_contract

__all__ = ["BACKEND", "kernel_matrix", "cross_kernel", "sqdist_contract"]
