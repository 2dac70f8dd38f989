"""Backend selection for the compiled kernels.

Hot loops are written twice: a numba ``@njit`` version and a vectorised
numpy version. The numba path is used when numba imports cleanly and the
``PROSODIC_CODES_DISABLE_NUMBA`` environment variable is unset (or ``0``).
"""
from __future__ import annotations

import os

ENV_FLAG = "PROSODIC_CODES_DISABLE_NUMBA"

try:
    import numba

    NUMBA_AVAILABLE = True
    NUMBA_VERSION = numba.__version__
except Exception:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False
    NUMBA_VERSION = "none"


def _env_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "0").strip().lower() not in ("", "0", "false", "no")


_backend = "numba" if NUMBA_AVAILABLE and not _env_disabled() else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not NUMBA_AVAILABLE:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous
