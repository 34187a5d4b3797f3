"""Kernel backend selection.

Hot loops come in two flavours: a numba ``@njit`` version and a vectorized
numpy version.  Numba is used when importable unless the environment variable
``STOCHWISHART_DISABLE_NUMBA`` is set to a truthy value.
"""

import os

_FLAG = "STOCHWISHART_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _disabled_by_env():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()


def njit(func):
    """``numba.njit(cache=True)`` when numba is installed, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
