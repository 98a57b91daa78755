"""Optional numba acceleration.

Set ``BPARHMM_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""
import os

try:
    from numba import njit
    numba_installed = True
except ImportError:  # pragma: no cover
    numba_installed = False

numba_disabled = os.environ.get("BPARHMM_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")


def optional_njit(*args, **kwargs):
    def decorator(func):
        if numba_installed and not numba_disabled:
            return njit(*args, **kwargs)(func)
        return func
    return decorator
