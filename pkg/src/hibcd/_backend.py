"""Pick the kernel implementation once, at import time.

The compiled module is used when it was built; set ``HIBCD_PURE_PYTHON=1``
to force the numpy kernels.
"""

import os

from hibcd import _pykernels

_KERNELS = ("csr_gather", "project_simplex_columns", "power_pair")

if os.environ.get("HIBCD_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from hibcd import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"
    # a stale build missing a kernel is treated as absent
    if BACKEND == "cython" and not all(hasattr(kernels, k) for k in _KERNELS):
        kernels = _pykernels
        BACKEND = "python"

csr_gather = kernels.csr_gather
project_simplex_columns = kernels.project_simplex_columns
power_pair = kernels.power_pair

__all__ = ["BACKEND", "csr_gather", "project_simplex_columns", "power_pair", "kernels"]
