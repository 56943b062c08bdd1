"""Optional numba acceleration.

Set ``EVALKIT_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for checking that both paths agree).
"""

import logging
import os

_log = logging.getLogger(__name__)

_disabled = os.environ.get("EVALKIT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError("disabled by EVALKIT_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError as e:  # pragma: no cover - depends on environment
    _log.debug("numba unavailable (%s), using numpy kernels", e)
    njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def jit(fn):
    """Compile `fn` with numba if available, else return None."""
    if not HAVE_NUMBA:
        return None
    return njit(cache=True, nogil=True)(fn)
