"""Optional numba acceleration.

Set ``POPR_DISABLE_NUMBA=1`` to force the pure numpy implementations, e.g. for
debugging or on platforms without a working LLVM.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("POPR_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by POPR_DISABLE_NUMBA")
    import numba as _numba
except ImportError:
    _numba = None

HAS_NUMBA = _numba is not None
USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(func=None, **options):
    """``numba.njit`` with caching, or the identity when numba is unavailable."""
    options.setdefault("cache", True)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**options)(f)

    if callable(func):
        return wrap(func)
    return wrap
