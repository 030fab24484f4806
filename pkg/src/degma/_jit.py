"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``DEGMA_DISABLE_NUMBA=1`` to force the numpy path. The flag is read at
call time, so tests can flip it with ``monkeypatch.setenv``.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "DEGMA_DISABLE_NUMBA"


def numba_enabled() -> bool:
    if not HAVE_NUMBA:
        return False
    return os.environ.get(ENV_FLAG, "0").strip().lower() not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"
