"""Finite-volume solver for systems of nonlocal conservation laws with memory.

Set ``MEMLAW_THREADS`` before the first import to cap the BLAS/OpenMP
thread pools used by numpy.
"""

import os as _os

_threads = _os.environ.get("MEMLAW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
