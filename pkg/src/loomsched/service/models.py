"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

PolicyName = Literal["static", "dynamic", "guided", "stealing", "ich"]
Polarity = Literal["paper", "figure"]
AppName = Literal["synth", "spmv", "bfs"]


class PolicyModel(BaseModel):
    name: PolicyName
    chunk: Optional[int] = None
    epsilon: Optional[float] = None
    polarity: Polarity = "paper"


class SynthInputModel(BaseModel):
    distribution: str = "exp-dec"
    n: int = 100_000
    beta: float = 100_000.0
    seed: int = 0


class MatrixInputModel(BaseModel):
    path: str


class GraphInputModel(BaseModel):
    kind: str = "uniform"
    nv: int = 10_000
    max_degree: int = 10
    gamma: float = 2.3
    seed: int = 0
    source: int = 0


class ExperimentRequest(BaseModel):
    app: AppName
    synth: Optional[SynthInputModel] = None
    matrix: Optional[MatrixInputModel] = None
    graph: Optional[GraphInputModel] = None
    policies: list[PolicyName] = Field(
        default_factory=lambda: ["static", "dynamic", "guided", "stealing", "ich"]
    )
    dynamic_chunks: list[int] = Field(default_factory=lambda: [1, 2, 3])
    guided_chunks: list[int] = Field(default_factory=lambda: [1, 2, 3])
    stealing_chunks: list[int] = Field(default_factory=lambda: [1, 2, 3, 64])
    epsilons: list[float] = Field(default_factory=lambda: [0.25, 0.33, 0.5])
    polarity: Polarity = "paper"
    threads: Optional[list[int]] = None  # None -> server default grid
    repetitions: int = 5
    seed: int = 0
    pin: bool = True


class BenchRecordModel(BaseModel):
    app: str
    input: str
    policy: str
    param: Optional[float]
    threads: int
    times: list[float]
    best_time: float


class CellFlagModel(BaseModel):
    app: str
    input: str
    policy: str
    param: Optional[float]
    threads: int
    kind: str
    detail: str


class ExperimentResponse(BaseModel):
    records: list[BenchRecordModel]
    flags: list[CellFlagModel]


class SimulateRequest(BaseModel):
    costs: list[int]
    p: int = 1
    policy: PolicyModel
    seed: int = 0
    include_events: bool = False


class DTransitionModel(BaseModel):
    time: int
    old: int
    new: int
    reason: str


class SimulateResponse(BaseModel):
    makespan: int
    per_worker_k: list[int]
    per_worker_completed: list[int]
    per_worker_cost: list[int]
    d_traces: list[list[DTransitionModel]]
    events: Optional[list[dict]] = None


class MetricRequest(BaseModel):
    records: list[BenchRecordModel]
    app: str
    p: int
    schedule: Optional[str] = None  # required for speedup
    input: Optional[str] = None


class MetricResponse(BaseModel):
    metric: str
    value: float


class RenderRequest(BaseModel):
    records: list[BenchRecordModel]
    format: Literal["csv", "json"] = "csv"


class RenderResponse(BaseModel):
    content: str


class WorkloadRequest(BaseModel):
    n: int = 100_000
    distribution: str = "exp-dec"
    beta: float = 100_000.0
    seed: int = 0


class WorkloadResponse(BaseModel):
    n: int
    distribution: str
    beta: float
    seed: int
    total_cost: int
    min_cost: int
    max_cost: int
    mean_cost: float
    costs: list[int]


class GraphRequest(BaseModel):
    kind: str = "uniform"
    nv: int = 10_000
    max_degree: int = 10
    gamma: float = 2.3
    seed: int = 0
    include_arrays: bool = False


class GraphResponse(BaseModel):
    kind: str
    nv: int
    edges: int
    mean_degree: float
    min_degree: int
    max_degree_observed: int
    degree_slope: Optional[float] = None
    offsets: Optional[list[int]] = None
    targets: Optional[list[int]] = None


class MatrixParseRequest(BaseModel):
    content: str


class RowStatsModel(BaseModel):
    mean_nnz: float
    max_min_ratio: Optional[float]
    variance: float
    empty_rows: int


class MatrixParseResponse(BaseModel):
    rows: int
    cols: int
    nnz: int
    row_counts: list[int]
    stats: RowStatsModel


class HealthResponse(BaseModel):
    status: str
    version: str
