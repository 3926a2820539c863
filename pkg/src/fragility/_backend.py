"""Backend selection: numba-compiled kernels or pure numpy.

The FRAGILITY_BACKEND environment variable picks the implementation:

* ``auto``  (default) -- use numba when importable, numpy otherwise
* ``numba`` -- require numba, raise if it is missing
* ``numpy`` -- force the pure-numpy path even when numba is installed

Both paths compute identical results; the flag only trades compile time
for throughput on the hot kernels.
"""

from __future__ import annotations

import os

_ENV_VAR = "FRAGILITY_BACKEND"
_choice = os.environ.get(_ENV_VAR, "auto").strip().lower()

try:
    import numba  # type: ignore

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"{_ENV_VAR} must be one of 'auto', 'numba', 'numpy'; got {_choice!r}"
    )
if _choice == "numba" and not HAS_NUMBA:
    raise ImportError(f"{_ENV_VAR}=numba but numba is not importable")

USE_NUMBA: bool = HAS_NUMBA if _choice == "auto" else _choice == "numba"


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """numba.njit when available, identity decorator otherwise.

    Used to decorate loop-form kernels so the same source serves both
    backends; the numpy path never calls the undecorated loops (it has
    vectorized twins) except in tests.
    """
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)

    def _null(func):
        return func

    # bare @njit vs @njit(...) both work
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return _null
