"""Optional numba acceleration.

Set ``ROAR_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used regardless.
"""
import os

_DISABLED = os.environ.get("ROAR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba as _nb
except ImportError:  # pragma: no cover - exercised only without numba
    _nb = None

HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "error_model": "numpy",
    "boundscheck": False,
}


def njit(fn=None, **kwargs):
    """``numba.njit`` with project defaults; identity when numba is absent."""
    opts = dict(numba_default, **kwargs)

    def wrap(f):
        if _nb is None:
            return f
        return _nb.njit(**opts)(f)

    if fn is not None:
        return wrap(fn)
    return wrap
