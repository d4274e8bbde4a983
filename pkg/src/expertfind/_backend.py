"""Selects between the numba-compiled kernels and their pure-numpy twins.

Set ``EXPERTFIND_DISABLE_NUMBA=1`` before import (or call :func:`set_numba`)
to force the numpy path. Both paths must agree to floating-point rounding.
"""
import os
import logging

logger = logging.getLogger(__name__)

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None
    HAS_NUMBA = False

_DISABLED = os.environ.get("EXPERTFIND_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

_use_numba = HAS_NUMBA and not _DISABLED


def use_numba() -> bool:
    return _use_numba


def set_numba(enabled: bool) -> bool:
    """Toggle the compiled path at runtime; returns the previous setting."""
    global _use_numba
    previous = _use_numba
    if enabled and not HAS_NUMBA:
        logger.warning("numba is not installed; staying on the numpy path")
        enabled = False
    _use_numba = enabled
    return previous


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    Compilation is lazy, so decorating costs nothing when the numpy path is
    selected.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
