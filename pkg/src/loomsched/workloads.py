"""Benchmark inputs: synthetic per-iteration cost arrays, random graph
generators, a Matrix Market coordinate reader/writer, and a calibrated
busy-spin primitive for realizing abstract work units as CPU time.

All generators are pure functions of their parameters and seed: the same
arguments always produce byte-identical arrays.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterator

import numpy as np

__all__ = [
    "Distribution",
    "WorkloadSpec",
    "Graph",
    "CsrMatrix",
    "RowStats",
    "MatrixMarketError",
    "SpinCalibration",
    "gen_exponential_workload",
    "gen_linear_workload",
    "gen_workload",
    "gen_uniform_graph",
    "gen_scale_free_graph",
    "fit_degree_slope",
    "read_matrix_market",
    "load_matrix_market",
    "write_matrix_market",
    "row_stats",
    "validate_workload",
    "validate_graph",
    "validate_csr",
    "spin_work",
    "spin_sink",
    "ensure_spin_calibrated",
    "cached_workload",
    "cached_graph",
]


class Distribution(Enum):
    """Shape of a synthetic cost array."""

    LINEAR = "linear"
    EXP_INCREASING = "exp-inc"
    EXP_DECREASING = "exp-dec"

    @classmethod
    def coerce(cls, value: "Distribution | str") -> "Distribution":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(
                f"unknown distribution {value!r}; expected one of: {options}"
            ) from None


@dataclass(frozen=True, eq=False)
class WorkloadSpec:
    """A synthetic loop workload: one positive integer cost per iteration."""

    costs: np.ndarray
    distribution: Distribution
    beta: float
    seed: int

    @property
    def n(self) -> int:
        return int(self.costs.shape[0])

    @property
    def total_cost(self) -> int:
        return int(self.costs.sum())


@dataclass(frozen=True, eq=False)
class Graph:
    """A directed graph in CSR adjacency form."""

    vertex_count: int
    offsets: np.ndarray
    targets: np.ndarray
    kind: str
    seed: int
    max_degree: int | None = None
    gamma: float | None = None

    @property
    def edge_count(self) -> int:
        return int(self.targets.shape[0])

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v] : self.offsets[v + 1]]


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """A sparse matrix in compressed sparse row form."""

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    def toarray(self) -> np.ndarray:
        """Dense copy; intended for small matrices in tests."""
        dense = np.zeros((self.rows, self.cols), dtype=np.float64)
        for r in range(self.rows):
            lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
            dense[r, self.col_indices[lo:hi]] = self.values[lo:hi]
        return dense


@dataclass(frozen=True)
class RowStats:
    """Per-row nonzero-count statistics of a sparse matrix."""

    mean_nnz: float
    max_min_ratio: float | None
    variance: float
    empty_rows: int


class MatrixMarketError(ValueError):
    """Raised for malformed Matrix Market input; carries the 1-based line."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# ------------------------------------------------------------- validators ----


def validate_workload(spec: WorkloadSpec) -> None:
    costs = spec.costs
    if costs.ndim != 1:
        raise ValueError("costs must be a one-dimensional array")
    if costs.size and int(costs.min()) < 1:
        raise ValueError("all costs must be >= 1")
    if spec.distribution is Distribution.EXP_INCREASING:
        if np.any(np.diff(costs) < 0):
            raise ValueError("exp-inc costs must be sorted non-decreasing")
    elif spec.distribution is Distribution.EXP_DECREASING:
        if np.any(np.diff(costs) > 0):
            raise ValueError("exp-dec costs must be sorted non-increasing")


def validate_graph(g: Graph) -> None:
    nv = g.vertex_count
    if g.offsets.shape != (nv + 1,):
        raise ValueError("offsets must have length vertex_count + 1")
    if g.offsets[0] != 0:
        raise ValueError("offsets must start at 0")
    if np.any(np.diff(g.offsets) < 0):
        raise ValueError("offsets must be non-decreasing")
    if int(g.offsets[-1]) != g.targets.shape[0]:
        raise ValueError("offsets[-1] must equal the number of edges")
    if g.targets.size and (
        int(g.targets.min()) < 0 or int(g.targets.max()) >= nv
    ):
        raise ValueError("edge targets must lie in [0, vertex_count)")


def validate_csr(m: CsrMatrix) -> None:
    if m.rows < 0 or m.cols < 0:
        raise ValueError("matrix dimensions must be non-negative")
    if m.row_offsets.shape != (m.rows + 1,):
        raise ValueError("row_offsets must have length rows + 1")
    if m.row_offsets[0] != 0 or np.any(np.diff(m.row_offsets) < 0):
        raise ValueError("row_offsets must be non-decreasing from 0")
    if int(m.row_offsets[-1]) != m.col_indices.shape[0]:
        raise ValueError("row_offsets[-1] must equal nnz")
    if m.col_indices.shape != m.values.shape:
        raise ValueError("col_indices and values must have equal length")
    if m.col_indices.size and (
        int(m.col_indices.min()) < 0 or int(m.col_indices.max()) >= m.cols
    ):
        raise ValueError("column indices must lie in [0, cols)")
    for r in range(m.rows):
        lo, hi = int(m.row_offsets[r]), int(m.row_offsets[r + 1])
        if hi - lo > 1 and np.any(np.diff(m.col_indices[lo:hi]) <= 0):
            raise ValueError(
                f"row {r}: column indices must be strictly increasing"
            )


# ----------------------------------------------------- synthetic workloads ----


def gen_exponential_workload(
    n: int, beta: float, order: str, seed: int
) -> WorkloadSpec:
    """Draw `n` integer costs from Exponential(beta) and sort them.

    Sampling uses the inverse CDF on a seeded uniform stream; each draw is
    rounded up and clamped to at least 1. `order` is "inc" (non-decreasing)
    or "dec" (non-increasing).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if order not in ("inc", "dec"):
        raise ValueError("order must be 'inc' or 'dec'")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    raw = np.ceil(-beta * np.log1p(-u))
    costs = np.maximum(raw, 1.0).astype(np.int64)
    costs.sort()
    if order == "dec":
        costs = costs[::-1].copy()
    dist = (
        Distribution.EXP_INCREASING
        if order == "inc"
        else Distribution.EXP_DECREASING
    )
    spec = WorkloadSpec(costs=costs, distribution=dist, beta=beta, seed=seed)
    validate_workload(spec)
    return spec


def gen_linear_workload(n: int, beta: float, seed: int) -> WorkloadSpec:
    """Draw `n` iid uniform integer costs from [1, 2*beta] (mean ~beta).

    The array is left unsorted, so consecutive iterations are statistically
    exchangeable and any contiguous slice carries roughly proportional work.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    costs = np.maximum(np.ceil(2.0 * beta * u), 1.0).astype(np.int64)
    spec = WorkloadSpec(
        costs=costs, distribution=Distribution.LINEAR, beta=beta, seed=seed
    )
    validate_workload(spec)
    return spec


def gen_workload(
    n: int, distribution: Distribution | str, beta: float, seed: int
) -> WorkloadSpec:
    """Dispatch to the generator for `distribution`."""
    dist = Distribution.coerce(distribution)
    if dist is Distribution.LINEAR:
        return gen_linear_workload(n, beta, seed)
    order = "inc" if dist is Distribution.EXP_INCREASING else "dec"
    return gen_exponential_workload(n, beta, order, seed)


# ------------------------------------------------------------------ graphs ----


def gen_uniform_graph(nv: int, max_degree: int, seed: int) -> Graph:
    """Generate a graph whose out-degrees are uniform on [1, max_degree].

    Edge targets are drawn uniformly from all vertices; self-loops and
    parallel edges are permitted.
    """
    if nv < 1:
        raise ValueError("nv must be >= 1")
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    rng = np.random.default_rng(seed)
    degrees = rng.integers(1, max_degree, size=nv, endpoint=True)
    offsets = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(degrees, out=offsets[1:])
    targets = rng.integers(0, nv, size=int(offsets[-1]), dtype=np.int64)
    g = Graph(
        vertex_count=nv,
        offsets=offsets,
        targets=targets,
        kind="uniform",
        seed=seed,
        max_degree=max_degree,
    )
    validate_graph(g)
    return g


def gen_scale_free_graph(nv: int, gamma: float, seed: int) -> Graph:
    """Generate a graph whose out-degrees follow P(k) proportional to k^-gamma.

    Degrees are drawn by inverse CDF from the discrete power law normalized
    over k in [1, nv-1]; edge targets are uniform over all vertices.
    """
    if nv < 2:
        raise ValueError("nv must be >= 2")
    if gamma <= 1:
        raise ValueError("gamma must be > 1")
    rng = np.random.default_rng(seed)
    ks = np.arange(1, nv, dtype=np.float64)
    weights = ks ** (-gamma)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = rng.random(nv)
    idx = np.searchsorted(cdf, u, side="right")
    degrees = np.minimum(idx, len(ks) - 1) + 1
    offsets = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(degrees, out=offsets[1:])
    targets = rng.integers(0, nv, size=int(offsets[-1]), dtype=np.int64)
    g = Graph(
        vertex_count=nv,
        offsets=offsets,
        targets=targets,
        kind="scalefree",
        seed=seed,
        gamma=gamma,
    )
    validate_graph(g)
    return g


def fit_degree_slope(g: Graph, k_lo: int = 1, k_hi: int = 100) -> float:
    """Fit the log-log slope of the degree histogram over [k_lo, k_hi].

    Returns the least-squares slope of log(count) against log(k) across the
    bins in range that are non-empty.
    """
    counts = np.bincount(g.degrees())
    ks = np.arange(len(counts))
    mask = (ks >= k_lo) & (ks <= k_hi) & (counts > 0)
    if mask.sum() < 2:
        raise ValueError("not enough non-empty degree bins to fit a slope")
    slope, _ = np.polyfit(np.log(ks[mask]), np.log(counts[mask]), 1)
    return float(slope)


# ----------------------------------------------------------- matrix market ----

_MM_FIELDS = ("real", "integer", "pattern")
_MM_SYMMETRIES = ("general", "symmetric")


def _numbered_lines(stream: IO[str]) -> Iterator[tuple[int, str]]:
    for i, line in enumerate(stream, start=1):
        yield i, line.rstrip("\n")


def read_matrix_market(source: IO[str]) -> CsrMatrix:
    """Parse a Matrix Market coordinate stream into a canonical CsrMatrix.

    Accepts real, integer, and pattern fields with general or symmetric
    storage. Indices are converted from 1-based to 0-based, symmetric
    storage is expanded to both triangles (diagonal once), pattern entries
    get value 1.0, and duplicate coordinates are resolved last-write-wins.
    Malformed input raises MatrixMarketError with the offending line number.
    """
    lines = _numbered_lines(source)
    try:
        header_no, header = next(lines)
    except StopIteration:
        raise MatrixMarketError(1, "empty input; expected %%MatrixMarket header")
    tokens = header.split()
    if (
        len(tokens) != 5
        or tokens[0] != "%%MatrixMarket"
        or tokens[1].lower() != "matrix"
    ):
        raise MatrixMarketError(
            header_no,
            "expected header '%%MatrixMarket matrix coordinate "
            "<field> <symmetry>'",
        )
    layout, field, symmetry = (t.lower() for t in tokens[2:5])
    if layout != "coordinate":
        raise MatrixMarketError(
            header_no, f"unsupported layout {layout!r}; only 'coordinate'"
        )
    if field not in _MM_FIELDS:
        raise MatrixMarketError(
            header_no,
            f"unsupported field {field!r}; expected one of {_MM_FIELDS}",
        )
    if symmetry not in _MM_SYMMETRIES:
        raise MatrixMarketError(
            header_no,
            f"unsupported symmetry {symmetry!r}; "
            f"expected one of {_MM_SYMMETRIES}",
        )

    dims = None
    dims_no = header_no
    for no, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise MatrixMarketError(no, "expected dimensions 'rows cols nnz'")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(no, "dimensions must be integers")
        dims_no = no
        break
    if dims is None:
        raise MatrixMarketError(dims_no, "missing dimensions line")
    rows, cols, nnz = dims
    if rows < 0 or cols < 0 or nnz < 0:
        raise MatrixMarketError(dims_no, "dimensions must be non-negative")
    if symmetry == "symmetric" and rows != cols:
        raise MatrixMarketError(dims_no, "symmetric matrix must be square")

    want_tokens = 2 if field == "pattern" else 3
    ent_rows: list[int] = []
    ent_cols: list[int] = []
    ent_vals: list[float] = []
    seen = 0
    last_no = dims_no
    for no, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if seen == nnz:
            raise MatrixMarketError(
                no, f"unexpected content after {nnz} entries"
            )
        parts = stripped.split()
        if len(parts) != want_tokens:
            raise MatrixMarketError(
                no,
                f"expected {want_tokens} tokens for field {field!r}, "
                f"got {len(parts)}",
            )
        try:
            i = int(parts[0])
            j = int(parts[1])
        except ValueError:
            raise MatrixMarketError(no, "entry indices must be integers")
        if not (1 <= i <= rows) or not (1 <= j <= cols):
            raise MatrixMarketError(
                no,
                f"entry ({i}, {j}) out of bounds for {rows}x{cols} matrix",
            )
        if field == "pattern":
            v = 1.0
        else:
            try:
                v = float(parts[2])
            except ValueError:
                raise MatrixMarketError(no, "entry value must be numeric")
        ent_rows.append(i - 1)
        ent_cols.append(j - 1)
        ent_vals.append(v)
        if symmetry == "symmetric" and i != j:
            ent_rows.append(j - 1)
            ent_cols.append(i - 1)
            ent_vals.append(v)
        seen += 1
        last_no = no
    if seen != nnz:
        raise MatrixMarketError(
            last_no, f"expected {nnz} entries, found only {seen}"
        )

    return _build_csr(rows, cols, ent_rows, ent_cols, ent_vals)


def _build_csr(
    rows: int,
    cols: int,
    ent_rows: list[int],
    ent_cols: list[int],
    ent_vals: list[float],
) -> CsrMatrix:
    r = np.asarray(ent_rows, dtype=np.int64)
    c = np.asarray(ent_cols, dtype=np.int64)
    v = np.asarray(ent_vals, dtype=np.float64)
    if r.size:
        # Stable order (row, col, arrival); of each duplicate run keep the
        # final arrival so later file entries override earlier ones.
        arrival = np.arange(r.size, dtype=np.int64)
        order = np.lexsort((arrival, c, r))
        r, c, v = r[order], c[order], v[order]
        keep = np.ones(r.size, dtype=bool)
        keep[:-1] = (r[:-1] != r[1:]) | (c[:-1] != c[1:])
        r, c, v = r[keep], c[keep], v[keep]
    counts = np.bincount(r, minlength=rows)
    row_offsets = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    m = CsrMatrix(
        rows=rows, cols=cols, row_offsets=row_offsets, col_indices=c, values=v
    )
    validate_csr(m)
    return m


def load_matrix_market(path: str | os.PathLike) -> CsrMatrix:
    """Read a Matrix Market file from disk."""
    with open(path, "r", encoding="ascii") as fh:
        return read_matrix_market(fh)


def write_matrix_market(m: CsrMatrix, stream: IO[str]) -> None:
    """Write a CsrMatrix as general real coordinate Matrix Market text."""
    stream.write("%%MatrixMarket matrix coordinate real general\n")
    stream.write(f"{m.rows} {m.cols} {m.nnz}\n")
    for row in range(m.rows):
        lo, hi = int(m.row_offsets[row]), int(m.row_offsets[row + 1])
        for k in range(lo, hi):
            stream.write(
                f"{row + 1} {int(m.col_indices[k]) + 1} "
                f"{float(m.values[k])!r}\n"
            )


def row_stats(m: CsrMatrix) -> RowStats:
    """Summarize per-row nonzero counts: mean, max/min ratio, variance.

    The ratio's minimum is taken over rows holding at least one nonzero;
    when every row is empty the ratio is None. Variance is the population
    variance of the per-row counts. Empty rows are counted separately.
    """
    if m.rows < 1:
        raise ValueError("row_stats requires at least one row")
    counts = np.diff(m.row_offsets)
    nonzero = counts[counts > 0]
    if nonzero.size:
        ratio = float(nonzero.max()) / float(nonzero.min())
    else:
        ratio = None
    return RowStats(
        mean_nnz=float(counts.mean()),
        max_min_ratio=ratio,
        variance=float(counts.var()),
        empty_rows=int((counts == 0).sum()),
    )


# --------------------------------------------------------------- spin work ----


@dataclass(frozen=True)
class SpinCalibration:
    """Result of the one-time spin-loop timing calibration."""

    ns_per_iter: float
    ns_per_unit: float
    iters_per_unit: float


_CALIBRATION: SpinCalibration | None = None
_SINK = 0
_MASK64 = (1 << 64) - 1
_CAL_ITERS = 4_000_000
_CAL_SAMPLES = 3

DEFAULT_NS_PER_UNIT = 1.0


def _measure_ns_per_iter(spin) -> float:
    spin(10_000, np.uint64(1))  # absorb JIT compilation
    best = float("inf")
    for _ in range(_CAL_SAMPLES):
        t0 = time.perf_counter_ns()
        spin(_CAL_ITERS, np.uint64(1))
        elapsed = time.perf_counter_ns() - t0
        best = min(best, elapsed / _CAL_ITERS)
    return best


def ensure_spin_calibrated(
    ns_per_unit: float | None = None,
) -> SpinCalibration:
    """Calibrate the busy-spin loop once per process and return the result.

    `ns_per_unit` sets the target duration of one work unit; when omitted it
    comes from LOOMSCHED_NS_PER_UNIT (default 1.0 ns).
    """
    global _CALIBRATION
    if ns_per_unit is None:
        ns_per_unit = float(
            os.environ.get("LOOMSCHED_NS_PER_UNIT", DEFAULT_NS_PER_UNIT)
        )
    if _CALIBRATION is not None and _CALIBRATION.ns_per_unit == ns_per_unit:
        return _CALIBRATION
    from loomsched._spinloop import lcg_spin

    ns_per_iter = _measure_ns_per_iter(lcg_spin)
    _CALIBRATION = SpinCalibration(
        ns_per_iter=ns_per_iter,
        ns_per_unit=ns_per_unit,
        iters_per_unit=ns_per_unit / ns_per_iter,
    )
    return _CALIBRATION


def spin_work(units: int) -> None:
    """Busy-spin for a duration proportional to `units`.

    The loop body is an integer LCG whose final state is folded into a
    module-level accumulator (see spin_sink), so the arithmetic is
    observable and cannot be optimized away. Proportionality holds within
    ~10% once a single call lasts comfortably above a microsecond.
    """
    if units < 0:
        raise ValueError("units must be >= 0")
    if units == 0:
        return
    cal = _CALIBRATION or ensure_spin_calibrated()
    from loomsched._spinloop import lcg_spin

    iters = max(1, int(round(units * cal.iters_per_unit)))
    global _SINK
    _SINK = (_SINK + int(lcg_spin(iters, np.uint64(units)))) & _MASK64


def spin_sink() -> int:
    """Accumulated spin-loop output; exists to keep the loop observable."""
    return int(_SINK)


# ------------------------------------------------------------- binary cache ----


def _cache_path(cache_dir: str | os.PathLike, kind: str, params: dict) -> Path:
    canonical = json.dumps(params, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode()).hexdigest()[:24]
    return Path(cache_dir) / f"{kind}-{digest}.npz"


def cached_workload(
    cache_dir: str | os.PathLike,
    n: int,
    distribution: Distribution | str,
    beta: float,
    seed: int,
) -> WorkloadSpec:
    """Like gen_workload, but persisted to `cache_dir` across processes."""
    dist = Distribution.coerce(distribution)
    path = _cache_path(
        cache_dir,
        "workload",
        {"n": n, "dist": dist.value, "beta": beta, "seed": seed},
    )
    if path.exists():
        with np.load(path, allow_pickle=False) as data:
            costs = data["costs"]
        spec = WorkloadSpec(
            costs=costs, distribution=dist, beta=beta, seed=seed
        )
        validate_workload(spec)
        return spec
    spec = gen_workload(n, dist, beta, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, costs=spec.costs)
    return spec


def cached_graph(
    cache_dir: str | os.PathLike,
    kind: str,
    nv: int,
    seed: int,
    *,
    max_degree: int | None = None,
    gamma: float | None = None,
) -> Graph:
    """Like the graph generators, but persisted to `cache_dir`."""
    if kind == "uniform":
        if max_degree is None:
            raise ValueError("uniform graphs require max_degree")
        params = {"nv": nv, "max_degree": max_degree, "seed": seed}
    elif kind == "scalefree":
        if gamma is None:
            raise ValueError("scale-free graphs require gamma")
        params = {"nv": nv, "gamma": gamma, "seed": seed}
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    path = _cache_path(cache_dir, f"graph-{kind}", params)
    if path.exists():
        with np.load(path, allow_pickle=False) as data:
            g = Graph(
                vertex_count=nv,
                offsets=data["offsets"],
                targets=data["targets"],
                kind=kind,
                seed=seed,
                max_degree=max_degree,
                gamma=gamma,
            )
        validate_graph(g)
        return g
    if kind == "uniform":
        g = gen_uniform_graph(nv, max_degree, seed)
    else:
        g = gen_scale_free_graph(nv, gamma, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, offsets=g.offsets, targets=g.targets)
    return g
