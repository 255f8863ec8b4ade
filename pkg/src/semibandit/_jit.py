"""Numba switch.

Set ``SEMIBANDIT_DISABLE_JIT=1`` to run every kernel as plain numpy code.
The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("SEMIBANDIT_DISABLE_JIT", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

if not DISABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        DISABLED = True

if DISABLED:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn

    BACKEND = "numpy"
else:

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    BACKEND = "numba"
