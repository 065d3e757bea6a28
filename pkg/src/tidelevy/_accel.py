"""Backend switch for the compiled kernels.

Set ``TIDELEVY_NUMBA=0`` before import to force the pure-numpy path.
Numba is also skipped silently when it cannot be imported.
"""

import os

_flag = os.environ.get("TIDELEVY_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None

NUMBA_ENABLED = NUMBA_REQUESTED and _numba is not None


def njit(func=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap
