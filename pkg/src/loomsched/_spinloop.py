"""Numba-compiled busy-spin primitive, isolated in its own module so the
(slow) numba import only happens when spin work is actually requested."""

from __future__ import annotations

import numba
import numpy as np

_MULT = np.uint64(6364136223846793005)
_INC = np.uint64(1442695040888963407)


@numba.njit(numba.uint64(numba.int64, numba.uint64), cache=True, nogil=True)
def lcg_spin(iters, state):  # pragma: no cover - timed, not traced
    x = state
    for _ in range(iters):
        x = x * _MULT + _INC
    return x
