"""Numba switch.

Kernels are compiled with numba when it is importable and the environment
variable ``CYCLODISS_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise the
pure-numpy implementations in :mod:`cyclodiss.kernels` are used.
"""

import os

_flag = os.environ.get("CYCLODISS_DISABLE_NUMBA", "0").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kws):
    """``numba.njit(cache=True, nogil=True)``, or identity without numba."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kws:
            return args[0]
        return lambda fn: fn
    kws.setdefault("cache", True)
    kws.setdefault("nogil", True)
    return numba.njit(*args, **kws)
