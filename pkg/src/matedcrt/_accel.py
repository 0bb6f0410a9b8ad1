"""Optional numba acceleration.

Hot kernels are written once in the numba-compatible subset of Python and
wrapped with :func:`njit`.  Setting ``MCRT_NUMBA=0`` in the environment (or
running without numba installed) leaves them as plain Python, and the
modules that have a vectorised numpy alternative switch to it instead of
interpreting the scalar loop.  The flag is read once, at import time.
"""

import os

_flag = os.environ.get("MCRT_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

USE_NUMBA = _numba is not None and _flag not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when acceleration is on, identity otherwise."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        return njit()(args[0])

    def wrap(func):
        if not USE_NUMBA:
            return func
        opts = {"cache": True}
        opts.update(kwargs)
        return _numba.njit(**opts)(func)

    return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
