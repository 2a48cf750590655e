"""Numba switch.

Hot kernels exist twice: a numba ``@njit`` version and a pure-numpy version.
``PENSELECT_NUMBA=0`` forces the numpy path; the flag is read on every
dispatch so tests can flip it with ``monkeypatch.setenv``.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(**NUMBA_OPTS)(func)


def numba_enabled():
    flag = os.environ.get("PENSELECT_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


def backend(name=None):
    """Resolve a backend name: explicit ``"numba"``/``"numpy"`` or the env default."""
    if name is None:
        return "numba" if numba_enabled() else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:  # pragma: no cover
        return "numpy"
    return name
