"""Backend switch for the hot kernels.

Every hot loop in the package exists twice: a scalar loop compiled with
``numba.njit`` and a vectorized pure-numpy version.  The numba path is used
when numba imports cleanly and ``OSCNEURON_NUMBA`` is not set to ``0``.

    OSCNEURON_NUMBA=0 pytest        # force the numpy fallback
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_FLAG = os.environ.get("OSCNEURON_NUMBA", "1").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Kernels are always compiled when numba exists (so the benchmark can
    compare both paths); ``USE_NUMBA`` only decides which path callers take.
    """
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


_threads = 1


def set_threads(n: int | None) -> None:
    """Cap the worker threads used by :func:`thread_map`.

    Results never depend on ``n``: every task carries its own seed and
    writes to its own output slot.
    """
    global _threads
    _threads = 1 if n is None else max(1, int(n))


def get_threads() -> int:
    return _threads


def thread_map(fn, items) -> list:
    """``[fn(x) for x in items]``, spread over up to ``get_threads()`` threads.

    Kernels are compiled with ``nogil=True`` so numba work overlaps.
    """
    items = list(items)
    if _threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(_threads, len(items))) as pool:
        return list(pool.map(fn, items))
