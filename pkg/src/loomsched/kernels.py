"""Benchmark loop bodies driven through the scheduler: the synthetic
cost-array kernel, sparse matrix-vector multiply, and level-synchronous
breadth-first search.

Synthetic work units can be realized two ways, selected by
LOOMSCHED_WORK_MODE (or the `mode` argument):

- "delay" (default): each dispatched chunk blocks for its summed cost times
  LOOMSCHED_NS_PER_UNIT nanoseconds. Workers overlap even on a single CPU,
  so wall-clock time reflects the schedule's critical path rather than the
  host's core count.
- "spin": each iteration busy-spins via the calibrated arithmetic loop,
  occupying a CPU for real; appropriate on multi-core hosts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from loomsched._timing import sleep_ns
from loomsched.scheduler import Policy, parallel_for
from loomsched.workloads import (
    Graph,
    CsrMatrix,
    WorkloadSpec,
    ensure_spin_calibrated,
    spin_work,
    validate_workload,
)

__all__ = [
    "WORK_MODES",
    "BfsResult",
    "UNREACHED",
    "work_mode",
    "unit_ns",
    "synth_kernel",
    "synth_serial_checksum",
    "spmv",
    "bfs",
    "bfs_serial_levels",
]

WORK_MODES = ("delay", "spin")
UNREACHED = -1

_MASK64 = (1 << 64) - 1


def work_mode(mode: str | None = None) -> str:
    """Resolve the work-realization mode: argument, then environment."""
    if mode is None:
        mode = os.environ.get("LOOMSCHED_WORK_MODE", "delay")
    if mode not in WORK_MODES:
        raise ValueError(
            f"unknown work mode {mode!r}; expected one of {WORK_MODES}"
        )
    return mode


def unit_ns(ns_per_unit: float | None = None) -> float:
    """Resolve the duration of one work unit in nanoseconds."""
    if ns_per_unit is None:
        ns_per_unit = float(os.environ.get("LOOMSCHED_NS_PER_UNIT", "1.0"))
    if ns_per_unit <= 0:
        raise ValueError("ns_per_unit must be > 0")
    return ns_per_unit


# ------------------------------------------------------------------- synth ----


def synth_serial_checksum(n: int) -> int:
    """Order-independent reference checksum: sum of 0..n-1 modulo 2^64."""
    return (n * (n - 1) // 2) & _MASK64


def _index_fold(begin: int, end: int) -> int:
    # Sum of the integers in [begin, end), folded mod 2^64.
    return ((begin + end - 1) * (end - begin) // 2) & _MASK64


def synth_kernel(
    spec: WorkloadSpec,
    policy: Policy,
    p: int,
    *,
    mode: str | None = None,
    ns_per_unit: float | None = None,
    seed: int | None = None,
    pin: bool = False,
) -> int:
    """Run the synthetic workload under `policy` and return its checksum.

    Each iteration i performs spec.costs[i] abstract work units; every
    index is folded into an order-independent checksum that must equal
    synth_serial_checksum(spec.n) regardless of policy or thread count.
    """
    validate_workload(spec)
    mode = work_mode(mode)
    n = spec.n
    sums = [0] * max(p, 1)

    if mode == "delay":
        npu = unit_ns(ns_per_unit)
        prefix = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(spec.costs, out=prefix[1:])

        def body(begin: int, end: int, wid: int) -> None:
            sleep_ns(int((prefix[end] - prefix[begin]) * npu))
            sums[wid] = (sums[wid] + _index_fold(begin, end)) & _MASK64

    else:
        ensure_spin_calibrated(ns_per_unit)
        costs = spec.costs.tolist()

        def body(begin: int, end: int, wid: int) -> None:
            for i in range(begin, end):
                spin_work(costs[i])
            sums[wid] = (sums[wid] + _index_fold(begin, end)) & _MASK64

    parallel_for(n, body, policy, p, seed=seed, pin=pin, range_body=True)
    return sum(sums) & _MASK64


# -------------------------------------------------------------------- spmv ----


def spmv(
    m: CsrMatrix,
    x: np.ndarray,
    policy: Policy,
    p: int,
    *,
    seed: int | None = None,
    pin: bool = False,
) -> np.ndarray:
    """Sparse matrix-vector product with one loop iteration per row.

    Each row's products are summed serially in index order, so the result
    vector is bit-identical across policies and thread counts.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (m.cols,):
        raise ValueError(
            f"x has shape {x.shape}, expected ({m.cols},) for a "
            f"{m.rows}x{m.cols} matrix"
        )
    from loomsched._kernels_numba import spmv_rows

    y = np.zeros(m.rows, dtype=np.float64)
    row_offsets, col_indices, values = m.row_offsets, m.col_indices, m.values

    def body(begin: int, end: int, wid: int) -> None:
        spmv_rows(begin, end, row_offsets, col_indices, values, x, y)

    parallel_for(m.rows, body, policy, p, seed=seed, pin=pin, range_body=True)
    return y


# --------------------------------------------------------------------- bfs ----


@dataclass(frozen=True)
class BfsResult:
    """Outcome of a breadth-first traversal."""

    levels: np.ndarray
    visited_count: int
    level_count: int
    total_iterations: int
    frontier_iterations: int


def bfs(
    g: Graph,
    source: int,
    policy: Policy,
    p: int,
    *,
    seed: int | None = None,
    pin: bool = False,
) -> BfsResult:
    """Level-synchronous BFS: a serial loop over levels, each level a
    parallel sweep over all vertices gated by a frontier mask.

    Discovery races are benign: concurrent discoverers of a vertex write
    the same level value. `total_iterations` counts every vertex visit of
    every sweep (the work the scheduler actually distributes);
    `frontier_iterations` counts only vertices that were on the frontier.
    """
    nv = g.vertex_count
    if not (0 <= source < nv):
        raise ValueError(f"source {source} out of range [0, {nv})")
    offsets = g.offsets.tolist()
    targets = g.targets.tolist()
    levels = [UNREACHED] * nv
    levels[source] = 0
    mask = [False] * nv
    mask[source] = True
    level = 0
    total_iterations = 0
    frontier_iterations = 0

    while True:
        frontier = sum(mask)
        if frontier == 0:
            break
        frontier_iterations += frontier
        total_iterations += nv
        next_mask = [False] * nv
        next_level = level + 1

        def body(begin: int, end: int, wid: int) -> None:
            for v in range(begin, end):
                if mask[v]:
                    for k in range(offsets[v], offsets[v + 1]):
                        w = targets[k]
                        if levels[w] == UNREACHED:
                            levels[w] = next_level
                            next_mask[w] = True

        parallel_for(nv, body, policy, p, seed=seed, pin=pin, range_body=True)
        mask = next_mask
        level += 1

    levels_arr = np.asarray(levels, dtype=np.int64)
    return BfsResult(
        levels=levels_arr,
        visited_count=int((levels_arr != UNREACHED).sum()),
        level_count=level,
        total_iterations=total_iterations,
        frontier_iterations=frontier_iterations,
    )


def bfs_serial_levels(g: Graph, source: int) -> np.ndarray:
    """Queue-based serial BFS used as the reference for level values."""
    from collections import deque

    nv = g.vertex_count
    if not (0 <= source < nv):
        raise ValueError(f"source {source} out of range [0, {nv})")
    levels = np.full(nv, UNREACHED, dtype=np.int64)
    levels[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            if levels[w] == UNREACHED:
                levels[w] = levels[v] + 1
                queue.append(int(w))
    return levels
