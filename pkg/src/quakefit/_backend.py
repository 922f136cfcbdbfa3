"""Kernel backend selection.

The O(N^2) inner loops (ETAS sums, time transforms, thinning) exist in two
forms: loop code compiled with numba, and chunked/vectorized pure-numpy
twins.  Set QUAKEFIT_NUMBA=0 (or "false"/"off"/"no") to force the numpy
path; the numpy path is also used automatically when numba is missing.
"""

import os
import warnings

_flag = os.environ.get("QUAKEFIT_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in {"0", "false", "off", "no"}

try:
    from numba import njit  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    HAVE_NUMBA = False
    if NUMBA_REQUESTED:
        warnings.warn("numba is not importable; using the pure-numpy kernels")

USE_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
