"""Backend selection for the hot numeric kernels.

Every kernel that matters for runtime has two implementations: a loop
version compiled with numba, and a vectorized numpy version. The numba
path is used when numba imports and ``FANOVA_SHAPLEY_NUMBA`` is not set to
a false-like value (``0``, ``false``, ``no``, ``off``).
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("FANOVA_SHAPLEY_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in {"0", "false", "no", "off"}
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def pick(jit_impl, numpy_impl):
    return jit_impl if USE_NUMBA else numpy_impl
