"""FastAPI application exposing the scheduling library.

All endpoints are synchronous (they run in the framework's thread pool)
because experiment cells block on real kernel execution. Domain validation
errors (ValueError and subclasses) map to HTTP 400; missing input files map
to HTTP 404.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

import loomsched
from loomsched.harness import (
    BenchRecord,
    ExperimentConfig,
    GraphInput,
    MatrixInput,
    SynthInput,
    default_thread_grid,
    epsilon_sensitivity,
    report_text,
    run_experiment,
    speedup,
    worst_stealing,
)
from loomsched.scheduler import make_policy
from loomsched.service import models
from loomsched.simulator import event_record, simulate
from loomsched.workloads import (
    fit_degree_slope,
    gen_scale_free_graph,
    gen_uniform_graph,
    gen_workload,
    read_matrix_market,
    row_stats,
)

import io


def _to_records(items: list[models.BenchRecordModel]) -> list[BenchRecord]:
    return [
        BenchRecord(
            app=m.app,
            input=m.input,
            policy=m.policy,
            param=m.param,
            threads=m.threads,
            times=tuple(m.times),
        )
        for m in items
    ]


def _record_model(r: BenchRecord) -> models.BenchRecordModel:
    return models.BenchRecordModel(
        app=r.app,
        input=r.input,
        policy=r.policy,
        param=r.param,
        threads=r.threads,
        times=list(r.times),
        best_time=r.best_time,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="loomsched", version=loomsched.__version__)

    @app.exception_handler(ValueError)
    def _value_error(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    def _not_found(request: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=models.HealthResponse)
    def health() -> models.HealthResponse:
        return models.HealthResponse(status="ok", version=loomsched.__version__)

    @app.post("/experiments/run", response_model=models.ExperimentResponse)
    def experiments_run(
        req: models.ExperimentRequest,
    ) -> models.ExperimentResponse:
        if req.app == "synth":
            spec_model = req.synth or models.SynthInputModel()
            input_spec = SynthInput(
                distribution=spec_model.distribution,
                n=spec_model.n,
                beta=spec_model.beta,
                seed=spec_model.seed,
            )
        elif req.app == "spmv":
            if req.matrix is None:
                raise ValueError("spmv experiments require matrix.path")
            input_spec = MatrixInput(path=req.matrix.path)
        else:
            g = req.graph or models.GraphInputModel()
            input_spec = GraphInput(
                kind=g.kind,
                nv=g.nv,
                max_degree=g.max_degree,
                gamma=g.gamma,
                seed=g.seed,
                source=g.source,
            )
        cfg = ExperimentConfig(
            app=req.app,
            input_spec=input_spec,
            policies=tuple(req.policies),
            dynamic_chunks=tuple(req.dynamic_chunks),
            guided_chunks=tuple(req.guided_chunks),
            stealing_chunks=tuple(req.stealing_chunks),
            epsilons=tuple(req.epsilons),
            polarity=req.polarity,
            threads=(
                tuple(req.threads)
                if req.threads is not None
                else default_thread_grid()
            ),
            repetitions=req.repetitions,
            seed=req.seed,
            pin=req.pin,
        )
        result = run_experiment(cfg)
        return models.ExperimentResponse(
            records=[_record_model(r) for r in result.records],
            flags=[
                models.CellFlagModel(
                    app=f.app,
                    input=f.input,
                    policy=f.policy,
                    param=f.param,
                    threads=f.threads,
                    kind=f.kind,
                    detail=f.detail,
                )
                for f in result.flags
            ],
        )

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate_run(req: models.SimulateRequest) -> models.SimulateResponse:
        policy = make_policy(
            req.policy.name,
            chunk=req.policy.chunk,
            epsilon=req.policy.epsilon,
            polarity=req.policy.polarity,
        )
        result = simulate(req.costs, req.p, policy, seed=req.seed)
        return models.SimulateResponse(
            makespan=result.makespan,
            per_worker_k=list(result.per_worker_k),
            per_worker_completed=list(result.per_worker_completed),
            per_worker_cost=list(result.per_worker_cost),
            d_traces=[
                [
                    models.DTransitionModel(
                        time=t.time, old=t.old, new=t.new, reason=t.reason
                    )
                    for t in trace
                ]
                for trace in result.d_traces
            ],
            events=(
                [event_record(ev) for ev in result.events]
                if req.include_events
                else None
            ),
        )

    @app.post("/metrics/speedup", response_model=models.MetricResponse)
    def metrics_speedup(req: models.MetricRequest) -> models.MetricResponse:
        if req.schedule is None:
            raise ValueError("speedup requires a schedule")
        value = speedup(
            _to_records(req.records),
            req.app,
            req.schedule,
            req.p,
            input=req.input,
        )
        return models.MetricResponse(
            metric=f"speedup:{req.schedule}", value=value
        )

    @app.post(
        "/metrics/epsilon-sensitivity", response_model=models.MetricResponse
    )
    def metrics_eps(req: models.MetricRequest) -> models.MetricResponse:
        value = epsilon_sensitivity(
            _to_records(req.records), req.app, req.p, input=req.input
        )
        return models.MetricResponse(metric="epsilon_sensitivity", value=value)

    @app.post("/metrics/worst-stealing", response_model=models.MetricResponse)
    def metrics_worst(req: models.MetricRequest) -> models.MetricResponse:
        value = worst_stealing(
            _to_records(req.records), req.app, req.p, input=req.input
        )
        return models.MetricResponse(metric="worst_stealing", value=value)

    @app.post("/reports/render", response_model=models.RenderResponse)
    def reports_render(req: models.RenderRequest) -> models.RenderResponse:
        return models.RenderResponse(
            content=report_text(_to_records(req.records), req.format)
        )

    @app.post("/workloads/generate", response_model=models.WorkloadResponse)
    def workloads_generate(
        req: models.WorkloadRequest,
    ) -> models.WorkloadResponse:
        spec = gen_workload(req.n, req.distribution, req.beta, req.seed)
        costs = spec.costs
        return models.WorkloadResponse(
            n=spec.n,
            distribution=spec.distribution.value,
            beta=spec.beta,
            seed=spec.seed,
            total_cost=int(costs.sum()),
            min_cost=int(costs.min()),
            max_cost=int(costs.max()),
            mean_cost=float(costs.mean()),
            costs=costs.tolist(),
        )

    @app.post("/graphs/generate", response_model=models.GraphResponse)
    def graphs_generate(req: models.GraphRequest) -> models.GraphResponse:
        if req.kind == "uniform":
            g = gen_uniform_graph(req.nv, req.max_degree, req.seed)
        elif req.kind == "scalefree":
            g = gen_scale_free_graph(req.nv, req.gamma, req.seed)
        else:
            raise ValueError(
                f"unknown graph kind {req.kind!r}; "
                "expected 'uniform' or 'scalefree'"
            )
        degrees = g.degrees()
        try:
            slope = fit_degree_slope(g)
        except ValueError:
            slope = None
        return models.GraphResponse(
            kind=g.kind,
            nv=g.vertex_count,
            edges=g.edge_count,
            mean_degree=float(degrees.mean()),
            min_degree=int(degrees.min()),
            max_degree_observed=int(degrees.max()),
            degree_slope=slope,
            offsets=g.offsets.tolist() if req.include_arrays else None,
            targets=g.targets.tolist() if req.include_arrays else None,
        )

    @app.post("/matrices/parse", response_model=models.MatrixParseResponse)
    def matrices_parse(
        req: models.MatrixParseRequest,
    ) -> models.MatrixParseResponse:
        m = read_matrix_market(io.StringIO(req.content))
        stats = row_stats(m)
        counts = (m.row_offsets[1:] - m.row_offsets[:-1]).tolist()
        return models.MatrixParseResponse(
            rows=m.rows,
            cols=m.cols,
            nnz=m.nnz,
            row_counts=counts,
            stats=models.RowStatsModel(
                mean_nnz=stats.mean_nnz,
                max_min_ratio=stats.max_min_ratio,
                variance=stats.variance,
                empty_rows=stats.empty_rows,
            ),
        )

    return app
