"""Optional numba acceleration.

Hot kernels in :mod:`wavegal.kernels` exist twice: a numba ``@njit`` loop
version and a vectorised numpy version.  The numba path is used when numba
imports cleanly and the environment variable ``WAVEGAL_NUMBA`` is not set to
``0``/``false``/``off``.  :func:`set_enabled` flips the choice at runtime
(tests and the benchmark use it).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

AVAILABLE = numba is not None
_enabled = AVAILABLE and os.environ.get("WAVEGAL_NUMBA", "1").lower() not in (
    "0", "false", "off", "no")


def enabled():
    return _enabled


def set_enabled(flag):
    """Select the numba (True) or numpy (False) kernels; returns the old value."""
    global _enabled
    old = _enabled
    _enabled = bool(flag) and AVAILABLE
    return old


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if AVAILABLE:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
