"""Backend selection for the hot assembly kernels.

The panel-pair quadrature loops exist twice: a numba ``@njit`` implementation
and a vectorised numpy fallback.  numba is the default whenever it imports
cleanly; set the environment variable ``HEATBEM_NO_NUMBA`` to any non-empty
value (or call :func:`set_backend`) to force the numpy path.  Both lanes
produce the same numbers up to floating-point roundoff and are compared by
``benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_env_disabled = bool(os.environ.get("HEATBEM_NO_NUMBA", ""))

USE_NUMBA = HAVE_NUMBA and not _env_disabled


def active_backend() -> str:
    """Name of the backend the next assembly call will use."""
    return "numba" if USE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    """Force a backend at runtime: ``"numba"`` or ``"numpy"``.

    Mostly for tests and benchmarks; the env flag covers deployment.
    """
    global USE_NUMBA
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not importable in this environment")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")
