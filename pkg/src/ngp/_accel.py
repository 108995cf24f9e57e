"""Numba toggle for the hot kernels.

Set ``NGP_DISABLE_NUMBA=1`` to run the pure-numpy fallbacks instead of the
JIT-compiled loops. The flag is read once at import time.
"""

import os

_FLAG = os.environ.get("NGP_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Kernels are always decorated so the benchmark can compare both paths in
    one process; dispatch between them is done by ``USE_NUMBA``.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)
