"""Numba/numpy backend selection for the hot simulation kernels.

The integrator has two implementations of the same semantics: compiled
numba kernels and a vectorized pure-numpy path.  The active one is chosen
by the ``SDECAL_BACKEND`` environment variable:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require the compiled kernels, fail loudly if unavailable
* ``numpy``: force the pure-numpy path

Runs are bit-reproducible within a backend.  Across backends the noise
streams agree to the last ulp or so (numpy's SIMD transcendentals are not
guaranteed bit-identical to libm), so trajectories agree to tolerance,
not bitwise.
"""

from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

_ENV_VAR = "SDECAL_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


class BackendError(RuntimeError):
    """Requested backend cannot be used."""


def requested_backend() -> str:
    """Raw value of the backend env flag (normalized, validated)."""
    value = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if value not in _CHOICES:
        raise BackendError(
            f"{_ENV_VAR}={value!r} is not one of {_CHOICES}"
        )
    return value


def active_backend() -> str:
    """Resolve the env flag to the backend that will actually run."""
    value = requested_backend()
    if value == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    if value == "numba" and not HAS_NUMBA:
        raise BackendError(
            f"{_ENV_VAR}=numba but numba is not importable"
        )
    return value


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    Keeps kernel modules importable without numba; the uncompiled
    functions are still correct, just far too slow for production runs,
    and ``active_backend()`` routes around them.
    """
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(func):
        return func

    return wrap
