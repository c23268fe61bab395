"""Select the numba or pure-numpy execution path for the hot kernels.

Set ``SPCCA_DISABLE_NUMBA=1`` before import to force the numpy path.  The
kernels are written with vectorised numpy calls so the same source runs
unchanged on either path.
"""

import os

_FLAG = os.environ.get("SPCCA_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(fn):
    if USE_NUMBA:
        return njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Return the un-jitted function behind a kernel."""
    return getattr(fn, "py_func", fn)
