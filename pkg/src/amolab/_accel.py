"""Numba switch.

Set ``AMOLAB_NO_NUMBA=1`` to run every kernel as plain Python/numpy.
"""
import os

DISABLED = os.environ.get("AMOLAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False


def jit(func):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
