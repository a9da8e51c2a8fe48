"""Benchmark orchestration: experiment configuration, timed runs with
functional cross-checks, derived metrics, and CSV/JSON reports.

An experiment is a grid of cells (policy, parameter, thread count) over one
application and input. Each cell runs once for warm-up (discarded) and then
`repetitions` timed runs; a cell whose functional output ever disagrees
with the single-threaded static reference is flagged and dropped while the
rest of the experiment continues.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from loomsched.kernels import bfs, spmv, synth_kernel, synth_serial_checksum
from loomsched.scheduler import AdaptPolarity, Static, make_policy
from loomsched.workloads import (
    gen_scale_free_graph,
    gen_uniform_graph,
    gen_workload,
    load_matrix_market,
)

__all__ = [
    "APPS",
    "POLICIES",
    "DEFAULT_DYNAMIC_CHUNKS",
    "DEFAULT_GUIDED_CHUNKS",
    "DEFAULT_STEALING_CHUNKS",
    "DEFAULT_EPSILONS",
    "SynthInput",
    "MatrixInput",
    "GraphInput",
    "ExperimentConfig",
    "BenchRecord",
    "CellFlag",
    "ExperimentResult",
    "MetricValue",
    "default_thread_grid",
    "run_experiment",
    "best_policy_time",
    "speedup",
    "epsilon_sensitivity",
    "worst_stealing",
    "derive_metrics",
    "emit_report",
    "load_report",
]

APPS = ("synth", "spmv", "bfs")
POLICIES = ("static", "dynamic", "guided", "stealing", "ich")

DEFAULT_DYNAMIC_CHUNKS = (1, 2, 3)
DEFAULT_GUIDED_CHUNKS = (1, 2, 3)
DEFAULT_STEALING_CHUNKS = (1, 2, 3, 64)
DEFAULT_EPSILONS = (0.25, 0.33, 0.5)

_TIMER_FLOOR_SECONDS = 1e-3


# ------------------------------------------------------------ input specs ----


@dataclass(frozen=True)
class SynthInput:
    """Synthetic cost-array input for the synth kernel."""

    distribution: str = "exp-dec"
    n: int = 100_000
    beta: float = 100_000.0
    seed: int = 0

    @property
    def label(self) -> str:
        return (
            f"{self.distribution}(n={self.n},beta={self.beta:g},"
            f"seed={self.seed})"
        )


@dataclass(frozen=True)
class MatrixInput:
    """Matrix Market file input for the spmv kernel."""

    path: str

    @property
    def label(self) -> str:
        return Path(self.path).name


@dataclass(frozen=True)
class GraphInput:
    """Generated graph input for the bfs kernel."""

    kind: str = "uniform"  # uniform | scalefree
    nv: int = 10_000
    max_degree: int = 10
    gamma: float = 2.3
    seed: int = 0
    source: int = 0

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return (
                f"uniform(nv={self.nv},deg={self.max_degree},"
                f"seed={self.seed})"
            )
        return f"scalefree(nv={self.nv},gamma={self.gamma:g},seed={self.seed})"


InputSpec = "SynthInput | MatrixInput | GraphInput"


# ------------------------------------------------------------------ config ----


def default_thread_grid(hw: int | None = None) -> tuple[int, ...]:
    """Doubling thread counts 1,2,4,... capped at and including `hw`."""
    if hw is None:
        hw = os.cpu_count() or 1
    grid = []
    t = 1
    while t < hw:
        grid.append(t)
        t *= 2
    grid.append(hw)
    return tuple(dict.fromkeys(grid))


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one benchmark experiment."""

    app: str
    input_spec: "SynthInput | MatrixInput | GraphInput"
    policies: tuple[str, ...] = POLICIES
    dynamic_chunks: tuple[int, ...] = DEFAULT_DYNAMIC_CHUNKS
    guided_chunks: tuple[int, ...] = DEFAULT_GUIDED_CHUNKS
    stealing_chunks: tuple[int, ...] = DEFAULT_STEALING_CHUNKS
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    polarity: str = "paper"
    threads: tuple[int, ...] = field(default_factory=default_thread_grid)
    repetitions: int = 5
    seed: int = 0
    pin: bool = True
    out_path: str | None = None
    out_format: str = "csv"
    trace: bool = False  # carried for front-ends; timing runs ignore it

    def __post_init__(self) -> None:
        if self.app not in APPS:
            raise ValueError(f"unknown app {self.app!r}; expected {APPS}")
        if not self.policies:
            raise ValueError("policies must be non-empty")
        for name in self.policies:
            if name not in POLICIES:
                raise ValueError(
                    f"unknown policy {name!r}; expected one of {POLICIES}"
                )
        if not self.threads or any(t < 1 for t in self.threads):
            raise ValueError("threads must be non-empty, all >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.out_format not in ("csv", "json"):
            raise ValueError("out_format must be 'csv' or 'json'")
        AdaptPolarity.coerce(self.polarity)
        grids = {
            "dynamic": self.dynamic_chunks,
            "guided": self.guided_chunks,
            "stealing": self.stealing_chunks,
            "ich": self.epsilons,
        }
        for name, grid in grids.items():
            if name in self.policies and not grid:
                raise ValueError(f"empty parameter grid for policy {name!r}")


# ----------------------------------------------------------------- results ----


@dataclass(frozen=True)
class BenchRecord:
    """Timings of one experiment cell."""

    app: str
    input: str
    policy: str
    param: float | None
    threads: int
    times: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) < 1:
            raise ValueError("a record needs at least one timing")
        if any(t <= 0 for t in self.times):
            raise ValueError("all times must be > 0")

    @property
    def repetitions(self) -> int:
        return len(self.times)

    @property
    def best_time(self) -> float:
        return min(self.times)


@dataclass(frozen=True)
class CellFlag:
    """A problem observed while running one cell."""

    app: str
    input: str
    policy: str
    param: float | None
    threads: int
    kind: str  # output-mismatch | timer-resolution
    detail: str


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple[BenchRecord, ...]
    flags: tuple[CellFlag, ...]

    @property
    def clean(self) -> bool:
        return not self.flags


@dataclass(frozen=True)
class MetricValue:
    app: str
    input: str
    threads: int
    metric: str
    value: float


# ---------------------------------------------------------------- running ----


def _policy_label(name: str, polarity: str) -> str:
    if name == "ich" and AdaptPolarity.coerce(polarity) is AdaptPolarity.FIGURE:
        return "ich-figure"
    return name


def _cells(cfg: ExperimentConfig) -> Iterable[tuple[str, float | None]]:
    for name in cfg.policies:
        if name == "static":
            yield name, None
        elif name == "dynamic":
            yield from ((name, float(c)) for c in cfg.dynamic_chunks)
        elif name == "guided":
            yield from ((name, float(c)) for c in cfg.guided_chunks)
        elif name == "stealing":
            yield from ((name, float(c)) for c in cfg.stealing_chunks)
        else:  # ich
            yield from ((name, float(e)) for e in cfg.epsilons)


def _prepare(cfg: ExperimentConfig) -> tuple[Callable, object, str]:
    """Resolve the input, build a timed runner, compute the reference output.

    Returns (runner, reference_output, input_label) where
    runner(policy, p) -> (output, seconds).
    """
    spec = cfg.input_spec
    if cfg.app == "synth":
        if not isinstance(spec, SynthInput):
            raise ValueError("synth experiments need a SynthInput")
        workload = gen_workload(spec.n, spec.distribution, spec.beta, spec.seed)

        def runner(policy, p):
            t0 = time.perf_counter()
            out = synth_kernel(
                workload, policy, p, seed=cfg.seed, pin=cfg.pin
            )
            return out, time.perf_counter() - t0

        # The serial checksum is the provable output of the p=1 static
        # reference run, so it stands in for actually executing one.
        reference = synth_serial_checksum(workload.n)
        return runner, reference, spec.label

    if cfg.app == "spmv":
        if not isinstance(spec, MatrixInput):
            raise ValueError("spmv experiments need a MatrixInput")
        if not Path(spec.path).exists():
            raise FileNotFoundError(f"matrix file not found: {spec.path}")
        matrix = load_matrix_market(spec.path)
        x = np.random.default_rng(cfg.seed).random(matrix.cols)

        def runner(policy, p):
            t0 = time.perf_counter()
            out = spmv(matrix, x, policy, p, seed=cfg.seed, pin=cfg.pin)
            return out, time.perf_counter() - t0

        reference, _ = runner(Static(), 1)
        return runner, reference, spec.label

    if not isinstance(spec, GraphInput):
        raise ValueError("bfs experiments need a GraphInput")
    if spec.kind == "uniform":
        graph = gen_uniform_graph(spec.nv, spec.max_degree, spec.seed)
    elif spec.kind == "scalefree":
        graph = gen_scale_free_graph(spec.nv, spec.gamma, spec.seed)
    else:
        raise ValueError(f"unknown graph kind {spec.kind!r}")

    def runner(policy, p):
        t0 = time.perf_counter()
        out = bfs(graph, spec.source, policy, p, seed=cfg.seed, pin=cfg.pin)
        return out.levels, time.perf_counter() - t0

    reference, _ = runner(Static(), 1)
    return runner, reference, spec.label


def _outputs_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every cell of `cfg` and return records plus flags.

    Per cell: one discarded warm-up run, then `cfg.repetitions` timed runs.
    Every run's functional output is compared with the single-threaded
    static reference; on mismatch the cell is flagged and abandoned but the
    experiment continues. Cells whose best time is under the 1 ms timer
    floor are flagged (and kept). When `cfg.out_path` is set, records are
    appended to `<out_path>.partial` as they complete, and the final report
    is written at the end.
    """
    runner, reference, input_label = _prepare(cfg)
    records: list[BenchRecord] = []
    flags: list[CellFlag] = []

    partial_path = Path(f"{cfg.out_path}.partial") if cfg.out_path else None
    partial = None
    if partial_path is not None:
        partial_path.parent.mkdir(parents=True, exist_ok=True)
        partial = open(partial_path, "w", encoding="utf-8")
    try:
        for policy_name, param in _cells(cfg):
            label = _policy_label(policy_name, cfg.polarity)
            chunk = int(param) if policy_name != "ich" and param else None
            epsilon = param if policy_name == "ich" else None
            policy = make_policy(
                policy_name,
                chunk=chunk,
                epsilon=epsilon,
                polarity=cfg.polarity,
            )
            for p in cfg.threads:
                times: list[float] = []
                bad = None
                for rep in range(cfg.repetitions + 1):  # rep 0 = warm-up
                    out, seconds = runner(policy, p)
                    if not _outputs_equal(out, reference):
                        bad = (
                            f"output mismatch on "
                            f"{'warm-up' if rep == 0 else f'rep {rep}'}"
                        )
                        break
                    if rep > 0:
                        times.append(seconds)
                if bad is not None:
                    flags.append(
                        CellFlag(
                            cfg.app, input_label, label, param, p,
                            "output-mismatch", bad,
                        )
                    )
                    continue
                record = BenchRecord(
                    app=cfg.app,
                    input=input_label,
                    policy=label,
                    param=param,
                    threads=p,
                    times=tuple(times),
                )
                if record.best_time < _TIMER_FLOOR_SECONDS:
                    flags.append(
                        CellFlag(
                            cfg.app, input_label, label, param, p,
                            "timer-resolution",
                            f"best time {record.best_time:.2e}s is below "
                            f"the {_TIMER_FLOOR_SECONDS:g}s timer floor",
                        )
                    )
                records.append(record)
                if partial is not None:
                    partial.write(json.dumps(_record_dict(record)) + "\n")
                    partial.flush()
    finally:
        if partial is not None:
            partial.close()

    if cfg.out_path:
        emit_report(records, cfg.out_format, cfg.out_path)
        partial_path.unlink(missing_ok=True)
    return ExperimentResult(records=tuple(records), flags=tuple(flags))


# ----------------------------------------------------------------- metrics ----


def _matches_schedule(label: str, schedule: str) -> bool:
    if schedule == "ich":
        return label == "ich" or label.startswith("ich-")
    return label == schedule


def _pool(
    records: Sequence[BenchRecord],
    app: str,
    schedule: str,
    p: int,
    input: str | None,
) -> list[BenchRecord]:
    return [
        r
        for r in records
        if r.app == app
        and r.threads == p
        and _matches_schedule(r.policy, schedule)
        and (input is None or r.input == input)
    ]


def best_policy_time(
    records: Sequence[BenchRecord],
    app: str,
    schedule: str,
    p: int,
    *,
    input: str | None = None,
) -> float:
    """Best wall-clock time of `schedule` at `p`, minimized over both the
    policy's parameter grid and its repetitions."""
    pool = _pool(records, app, schedule, p, input)
    if not pool:
        raise ValueError(
            f"no records for app={app!r} schedule={schedule!r} p={p}"
            + (f" input={input!r}" if input else "")
        )
    return min(r.best_time for r in pool)


def speedup(
    records: Sequence[BenchRecord],
    app: str,
    schedule: str,
    p: int,
    *,
    input: str | None = None,
) -> float:
    """T(app, guided, 1) / T(app, schedule, p); below 1 means slowdown."""
    baseline = best_policy_time(records, app, "guided", 1, input=input)
    return baseline / best_policy_time(records, app, schedule, p, input=input)


def _times_by_param(
    records: Sequence[BenchRecord],
    app: str,
    schedule: str,
    p: int,
    input: str | None,
) -> dict[float, float]:
    best: dict[float, float] = {}
    for r in _pool(records, app, schedule, p, input):
        if r.param is None:
            continue
        prev = best.get(r.param)
        best[r.param] = (
            r.best_time if prev is None else min(prev, r.best_time)
        )
    return best


def epsilon_sensitivity(
    records: Sequence[BenchRecord],
    app: str,
    p: int,
    *,
    input: str | None = None,
) -> float:
    """Worst-epsilon best time over best-epsilon best time; always >= 1."""
    by_eps = _times_by_param(records, app, "ich", p, input)
    if len(by_eps) < 2:
        raise ValueError(
            f"epsilon_sensitivity needs >= 2 epsilon values at p={p}, "
            f"found {sorted(by_eps)}"
        )
    return max(by_eps.values()) / min(by_eps.values())


def worst_stealing(
    records: Sequence[BenchRecord],
    app: str,
    p: int,
    *,
    input: str | None = None,
) -> float:
    """Worst-epsilon adaptive time over the best tuned stealing time.

    Above 1 means tuned stealing beats the worst-epsilon adaptive run;
    below 1 means even the worst epsilon choice wins.
    """
    by_eps = _times_by_param(records, app, "ich", p, input)
    if not by_eps:
        raise ValueError(f"worst_stealing needs adaptive records at p={p}")
    by_chunk = _times_by_param(records, app, "stealing", p, input)
    if not by_chunk:
        raise ValueError(f"worst_stealing needs stealing records at p={p}")
    return max(by_eps.values()) / min(by_chunk.values())


def derive_metrics(records: Sequence[BenchRecord]) -> list[MetricValue]:
    """Every metric computable from `records`, in deterministic order.

    For each (app, input, threads) group: a speedup per schedule whenever
    the guided single-thread baseline exists, plus epsilon_sensitivity and
    worst_stealing whenever their grids are covered.
    """
    groups = sorted(
        {(r.app, r.input) for r in records}
    )
    metrics: list[MetricValue] = []
    for app, input_label in groups:
        threads = sorted(
            {r.threads for r in records if (r.app, r.input) == (app, input_label)}
        )
        # Schedules actually present for this group, in canonical order.
        present = {r.policy for r in records if (r.app, r.input) == (app, input_label)}
        schedules = [
            s
            for s in ("static", "dynamic", "guided", "stealing", "ich")
            if any(_matches_schedule(lbl, s) for lbl in present)
        ]
        for p in threads:
            for schedule in schedules:
                try:
                    value = speedup(
                        records, app, schedule, p, input=input_label
                    )
                except ValueError:
                    continue
                metrics.append(
                    MetricValue(
                        app, input_label, p, f"speedup:{schedule}", value
                    )
                )
            try:
                metrics.append(
                    MetricValue(
                        app,
                        input_label,
                        p,
                        "epsilon_sensitivity",
                        epsilon_sensitivity(
                            records, app, p, input=input_label
                        ),
                    )
                )
            except ValueError:
                pass
            try:
                metrics.append(
                    MetricValue(
                        app,
                        input_label,
                        p,
                        "worst_stealing",
                        worst_stealing(records, app, p, input=input_label),
                    )
                )
            except ValueError:
                pass
    return metrics


# ----------------------------------------------------------------- reports ----


def _record_dict(r: BenchRecord) -> dict:
    return {
        "app": r.app,
        "input": r.input,
        "policy": r.policy,
        "param": r.param,
        "threads": r.threads,
        "times": list(r.times),
    }


def _metric_dict(m: MetricValue) -> dict:
    return {
        "app": m.app,
        "input": m.input,
        "threads": m.threads,
        "metric": m.metric,
        "value": m.value,
    }


def report_text(records: Sequence[BenchRecord], format: str) -> str:
    """Render records (plus derived metrics) as CSV or JSON text."""
    if not records:
        raise ValueError("cannot render an empty set of records")
    metrics = derive_metrics(records)
    if format == "json":
        return json.dumps(
            {
                "runs": [_record_dict(r) for r in records],
                "metrics": [_metric_dict(m) for m in metrics],
            },
            indent=2,
        )
    if format != "csv":
        raise ValueError("format must be 'csv' or 'json'")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["app", "input", "policy", "param", "threads", "rep", "seconds"])
    for r in records:
        for rep, seconds in enumerate(r.times, start=1):
            writer.writerow(
                [
                    r.app,
                    r.input,
                    r.policy,
                    "" if r.param is None else repr(r.param),
                    r.threads,
                    rep,
                    repr(seconds),
                ]
            )
    buf.write("\n")
    writer.writerow(["app", "input", "threads", "metric", "value"])
    for m in metrics:
        writer.writerow(
            [m.app, m.input, m.threads, m.metric, repr(m.value)]
        )
    return buf.getvalue()


def emit_report(
    records: Sequence[BenchRecord], format: str, path: str | os.PathLike
) -> None:
    """Write the report to `path`; empty records raise before any file IO."""
    text = report_text(records, format)
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def load_report(
    path: str | os.PathLike, format: str | None = None
) -> tuple[list[BenchRecord], list[MetricValue]]:
    """Read a report written by emit_report back into typed objects."""
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    text = path.read_text(encoding="utf-8")
    if format == "json":
        payload = json.loads(text)
        records = [
            BenchRecord(
                app=r["app"],
                input=r["input"],
                policy=r["policy"],
                param=r["param"],
                threads=int(r["threads"]),
                times=tuple(float(t) for t in r["times"]),
            )
            for r in payload["runs"]
        ]
        metrics = [
            MetricValue(
                m["app"], m["input"], int(m["threads"]), m["metric"],
                float(m["value"]),
            )
            for m in payload["metrics"]
        ]
        return records, metrics

    runs_text, _, metrics_text = text.partition("\n\n")
    grouped: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for row in csv.DictReader(io.StringIO(runs_text)):
        key = (
            row["app"],
            row["input"],
            row["policy"],
            None if row["param"] == "" else float(row["param"]),
            int(row["threads"]),
        )
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(float(row["seconds"]))
    records = [
        BenchRecord(
            app=k[0], input=k[1], policy=k[2], param=k[3], threads=k[4],
            times=tuple(grouped[k]),
        )
        for k in order
    ]
    metrics = [
        MetricValue(
            row["app"], row["input"], int(row["threads"]), row["metric"],
            float(row["value"]),
        )
        for row in csv.DictReader(io.StringIO(metrics_text))
    ]
    return records, metrics
