"""loomsched: adaptive loop self-scheduling with work stealing.

A policy-parameterized parallel-for engine (static, dynamic, guided,
stealing, and the adaptive divisor policy ``Ich``), the irregular workloads
and kernels to benchmark it with, a deterministic virtual-time simulator
used as a correctness oracle, and a benchmark harness exposed through a
FastAPI service and a thin-client CLI.
"""

from .harness import (
    BenchRecord,
    CellFlag,
    ExperimentConfig,
    ExperimentResult,
    GraphInput,
    MatrixInput,
    MetricValue,
    SynthInput,
    default_thread_grid,
    derive_metrics,
    emit_report,
    epsilon_sensitivity,
    load_report,
    report_text,
    run_experiment,
    speedup,
    worst_stealing,
)
from .kernels import BfsResult, bfs, spmv, synth_kernel, synth_serial_checksum
from .scheduler import (
    AdaptPolarity,
    Dynamic,
    Guided,
    Ich,
    IterationRange,
    LoadClass,
    LoopReport,
    Policy,
    Static,
    Stealing,
    WorkerReport,
    WorkerState,
    make_policy,
    parallel_for,
)
from .simulator import SimResult, exhaustive_small_check, simulate
from .workloads import (
    CsrMatrix,
    Distribution,
    Graph,
    MatrixMarketError,
    RowStats,
    WorkloadSpec,
    fit_degree_slope,
    gen_exponential_workload,
    gen_linear_workload,
    gen_scale_free_graph,
    gen_uniform_graph,
    gen_workload,
    load_matrix_market,
    read_matrix_market,
    row_stats,
    spin_work,
    write_matrix_market,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptPolarity",
    "BenchRecord",
    "BfsResult",
    "CellFlag",
    "CsrMatrix",
    "Distribution",
    "Dynamic",
    "ExperimentConfig",
    "ExperimentResult",
    "Graph",
    "GraphInput",
    "Guided",
    "Ich",
    "IterationRange",
    "LoadClass",
    "LoopReport",
    "MatrixInput",
    "MatrixMarketError",
    "MetricValue",
    "Policy",
    "RowStats",
    "SimResult",
    "Static",
    "Stealing",
    "SynthInput",
    "WorkerReport",
    "WorkerState",
    "WorkloadSpec",
    "bfs",
    "default_thread_grid",
    "derive_metrics",
    "emit_report",
    "epsilon_sensitivity",
    "exhaustive_small_check",
    "fit_degree_slope",
    "gen_exponential_workload",
    "gen_linear_workload",
    "gen_scale_free_graph",
    "gen_uniform_graph",
    "gen_workload",
    "load_matrix_market",
    "load_report",
    "make_policy",
    "parallel_for",
    "read_matrix_market",
    "report_text",
    "row_stats",
    "run_experiment",
    "simulate",
    "speedup",
    "spin_work",
    "spmv",
    "synth_kernel",
    "synth_serial_checksum",
    "worst_stealing",
    "write_matrix_market",
]
