"""Numba-compiled kernel inner loops, isolated so importing the kernels
module does not pay the numba import cost until a compiled path is used."""

from __future__ import annotations

import numba


@numba.njit(cache=True, nogil=True)
def spmv_rows(begin, end, row_offsets, col_indices, values, x, y):
    for r in range(begin, end):
        acc = 0.0
        for k in range(row_offsets[r], row_offsets[r + 1]):
            acc += values[k] * x[col_indices[k]]
        y[r] = acc
