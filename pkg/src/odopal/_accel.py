"""Backend switch for the compiled kernels.

Set ``ODOPAL_DISABLE_NUMBA=1`` to force the pure-numpy code paths. Numba is
also skipped silently when it cannot be imported.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("ODOPAL_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the default install
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` when numba is present, else identity."""
    if HAS_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func
