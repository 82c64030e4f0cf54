"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``ECHOSONAR_BACKEND=numpy`` (or ``ECHOSONAR_DISABLE_NUMBA=1``) before import
to force the fallback. Both paths are always importable so they can be compared.
"""
from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

try:
    import numba  # noqa: F401
    from numba import njit

    NUMBA_AVAILABLE = True
except Exception:  # pragma: no cover - numba missing
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def _requested_backend() -> str:
    if os.environ.get("ECHOSONAR_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    name = os.environ.get("ECHOSONAR_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        log.warning("unknown ECHOSONAR_BACKEND=%r, using numba", name)
        name = "numba"
    return name


BACKEND = "numba" if (_requested_backend() == "numba" and NUMBA_AVAILABLE) else "numpy"
USE_NUMBA = BACKEND == "numba"

__all__ = ["BACKEND", "NUMBA_AVAILABLE", "USE_NUMBA", "njit"]
