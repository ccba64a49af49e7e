"""Backend selection for the O(n^2) inner loops.

Every hot kernel in :mod:`vouest._loops` exists twice: a numba ``@njit``
version and a pure-numpy version.  Set ``VOUEST_DISABLE_NUMBA=1`` before
import to force the numpy path (also used automatically when numba is not
installed).  Both paths produce the same numbers up to floating point
reassociation.
"""

import os
import warnings
from typing import Any, Callable

_DISABLED = os.environ.get("VOUEST_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by VOUEST_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # an outdated system TBB is probed and rejected on first parallel call
    warnings.filterwarnings("ignore", message="The TBB threading layer requires", category=numba.NumbaWarning)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    numba = None
    HAVE_NUMBA = False

    def njit(*args: Any, **kwargs: Any) -> Callable:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n: int | None) -> None:
    """Cap worker threads used by parallel numba loops (no-op without numba)."""
    if n is None or not HAVE_NUMBA:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
