"""Tests for the HTTP service endpoints."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

import loomsched
from loomsched.harness import default_thread_grid
from loomsched.service import create_app


@pytest.fixture(scope="module")
def client() -> TestClient:
    return TestClient(create_app())


def _record(
    policy: str,
    param: float | None,
    p: int,
    times: list[float],
    app: str = "synth",
    input: str = "in",
) -> dict:
    return {
        "app": app,
        "input": input,
        "policy": policy,
        "param": param,
        "threads": p,
        "times": times,
        "best_time": min(times),
    }


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"] == loomsched.__version__


# ------------------------------------------------------------- generation ----


def test_generate_workload(client):
    payload = {"n": 200, "distribution": "exp-dec", "beta": 50.0, "seed": 1}
    a = client.post("/workloads/generate", json=payload).json()
    assert a["n"] == 200
    costs = a["costs"]
    assert len(costs) == 200
    assert all(x >= 1 for x in costs)
    assert all(x >= y for x, y in zip(costs, costs[1:]))  # non-increasing
    assert a["total_cost"] == sum(costs)
    assert a["min_cost"] == min(costs) and a["max_cost"] == max(costs)
    assert a["mean_cost"] == pytest.approx(sum(costs) / 200)
    b = client.post("/workloads/generate", json=payload).json()
    assert b["costs"] == costs  # deterministic


def test_generate_workload_rejects_bad_distribution(client):
    resp = client.post(
        "/workloads/generate",
        json={"n": 10, "distribution": "gaussian", "beta": 5.0, "seed": 0},
    )
    assert resp.status_code == 400
    assert "distribution" in resp.json()["detail"]


def test_generate_uniform_graph(client):
    resp = client.post(
        "/graphs/generate",
        json={"kind": "uniform", "nv": 500, "max_degree": 6, "seed": 2,
              "include_arrays": True},
    )
    assert resp.status_code == 200
    g = resp.json()
    assert g["nv"] == 500
    assert len(g["offsets"]) == 501
    assert len(g["targets"]) == g["edges"]
    assert 1 <= g["min_degree"] and g["max_degree_observed"] <= 6
    assert 1.0 <= g["mean_degree"] <= 6.0


def test_generate_scale_free_graph(client):
    resp = client.post(
        "/graphs/generate",
        json={"kind": "scalefree", "nv": 50_000, "gamma": 2.3, "seed": 3},
    )
    g = resp.json()
    assert resp.status_code == 200
    assert g["offsets"] is None  # arrays omitted by default
    assert g["degree_slope"] == pytest.approx(-2.3, abs=0.2)


def test_generate_graph_slope_absent_when_unfittable(client):
    resp = client.post(
        "/graphs/generate",
        json={"kind": "uniform", "nv": 50, "max_degree": 1, "seed": 0},
    )
    assert resp.status_code == 200
    assert resp.json()["degree_slope"] is None


def test_generate_graph_rejects_bad_kind(client):
    resp = client.post("/graphs/generate", json={"kind": "torus", "nv": 10})
    assert resp.status_code == 400


# ---------------------------------------------------------------- matrices ----


def test_parse_matrix(client):
    content = (
        "%%MatrixMarket matrix coordinate real symmetric\n"
        "3 3 2\n"
        "3 1 2.0\n"
        "2 2 7.0\n"
    )
    resp = client.post("/matrices/parse", json={"content": content})
    assert resp.status_code == 200
    body = resp.json()
    assert (body["rows"], body["cols"], body["nnz"]) == (3, 3, 3)
    assert body["row_counts"] == [1, 1, 1]
    assert body["stats"]["mean_nnz"] == 1.0
    assert body["stats"]["empty_rows"] == 0


def test_parse_matrix_error_carries_line(client):
    resp = client.post(
        "/matrices/parse",
        json={"content": "%%MatrixMarket matrix coordinate real general\n2 2 1\n9 9 1.0\n"},
    )
    assert resp.status_code == 400
    assert "line 3" in resp.json()["detail"]


# ---------------------------------------------------------------- simulate ----


def test_simulate_serial_makespan(client):
    resp = client.post(
        "/simulate",
        json={"costs": [3, 1, 4, 1, 5], "p": 1, "policy": {"name": "static"}},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["makespan"] == 14
    assert body["per_worker_completed"] == [5]
    assert body["events"] is None


def test_simulate_with_events_and_d_traces(client):
    costs = [9] * 8 + [1] * 8
    resp = client.post(
        "/simulate",
        json={
            "costs": costs,
            "p": 2,
            "policy": {"name": "ich", "epsilon": 0.25},
            "seed": 4,
            "include_events": True,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["makespan"] >= max(sum(costs) // 2, 9)
    events = body["events"]
    assert events and events[0]["kind"] == "dispatch"
    assert {"time", "worker", "kind"} <= set(events[0])
    assert len(body["d_traces"]) == 2
    flat = [t for trace in body["d_traces"] for t in trace]
    assert all(t["reason"] in ("low", "high", "steal") for t in flat)


def test_simulate_rejects_bad_args(client):
    resp = client.post(
        "/simulate", json={"costs": [1], "p": 0, "policy": {"name": "static"}}
    )
    assert resp.status_code == 400
    resp = client.post(
        "/simulate",
        json={"costs": [0], "p": 1, "policy": {"name": "static"}},
    )
    assert resp.status_code == 400
    resp = client.post(
        "/simulate", json={"costs": [1], "p": 1, "policy": {"name": "blorp"}}
    )
    assert resp.status_code == 422  # rejected by the request model


# ----------------------------------------------------------------- metrics ----


def test_metric_speedup(client):
    records = [
        _record("guided", 1.0, 1, [100.0]),
        _record("ich", 0.25, 4, [25.0]),
    ]
    resp = client.post(
        "/metrics/speedup",
        json={"records": records, "app": "synth", "p": 4, "schedule": "ich"},
    )
    assert resp.status_code == 200
    assert resp.json() == {"metric": "speedup:ich", "value": 4.0}
    missing_schedule = client.post(
        "/metrics/speedup", json={"records": records, "app": "synth", "p": 4}
    )
    assert missing_schedule.status_code == 400


def test_metric_epsilon_sensitivity(client):
    records = [
        _record("ich", 0.25, 8, [10.0]),
        _record("ich", 0.33, 8, [11.0]),
        _record("ich", 0.5, 8, [12.8]),
    ]
    resp = client.post(
        "/metrics/epsilon-sensitivity",
        json={"records": records, "app": "synth", "p": 8},
    )
    assert resp.json()["value"] == pytest.approx(1.28)


def test_metric_worst_stealing(client):
    records = [
        _record("ich", 0.25, 8, [5.6]),
        _record("stealing", 1.0, 8, [10.0]),
    ]
    resp = client.post(
        "/metrics/worst-stealing",
        json={"records": records, "app": "synth", "p": 8},
    )
    assert resp.json()["value"] == pytest.approx(0.56)
    underspecified = client.post(
        "/metrics/worst-stealing",
        json={"records": records[:1], "app": "synth", "p": 8},
    )
    assert underspecified.status_code == 400


# ----------------------------------------------------------------- reports ----


def test_render_report_csv_and_json(client):
    records = [_record("guided", 1.0, 1, [1.5, 1.25])]
    csv_resp = client.post(
        "/reports/render", json={"records": records, "format": "csv"}
    )
    assert csv_resp.status_code == 200
    lines = csv_resp.json()["content"].splitlines()
    assert lines[0] == "app,input,policy,param,threads,rep,seconds"
    json_resp = client.post(
        "/reports/render", json={"records": records, "format": "json"}
    )
    payload = json.loads(json_resp.json()["content"])
    assert {"runs", "metrics"} <= set(payload)
    assert payload["runs"][0]["times"] == [1.5, 1.25]


def test_render_report_rejects_empty(client):
    resp = client.post(
        "/reports/render", json={"records": [], "format": "csv"}
    )
    assert resp.status_code == 400


# ------------------------------------------------------------- experiments ----


def test_run_experiment_endpoint(client):
    resp = client.post(
        "/experiments/run",
        json={
            "app": "synth",
            "synth": {
                "distribution": "linear", "n": 4000, "beta": 2000.0, "seed": 0
            },
            "policies": ["guided", "ich"],
            "guided_chunks": [1],
            "epsilons": [0.25],
            "threads": [1, 2],
            "repetitions": 1,
            "pin": False,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["records"]) == 4
    for record in body["records"]:
        assert record["best_time"] == min(record["times"])
        assert record["threads"] in (1, 2)
    assert not any(f["kind"] == "output-mismatch" for f in body["flags"])


def test_run_experiment_default_thread_grid(client):
    resp = client.post(
        "/experiments/run",
        json={
            "app": "synth",
            "synth": {
                "distribution": "linear", "n": 4000, "beta": 2000.0, "seed": 0
            },
            "policies": ["static"],
            "repetitions": 1,
            "pin": False,
        },
    )
    assert resp.status_code == 200
    seen = {r["threads"] for r in resp.json()["records"]}
    assert seen == set(default_thread_grid())


def test_run_experiment_spmv_missing_file(client):
    resp = client.post(
        "/experiments/run",
        json={"app": "spmv", "matrix": {"path": "/no/such/file.mtx"}},
    )
    assert resp.status_code == 404


def test_run_experiment_validation_errors(client):
    unknown_policy = client.post(
        "/experiments/run",
        json={"app": "synth", "policies": ["fancy"]},
    )
    assert unknown_policy.status_code == 422
    bad_epsilon = client.post(
        "/experiments/run",
        json={
            "app": "synth",
            "synth": {"distribution": "linear", "n": 100, "beta": 10.0},
            "policies": ["ich"],
            "epsilons": [-0.5],
            "threads": [1],
            "repetitions": 1,
        },
    )
    assert bad_epsilon.status_code == 400
    no_matrix = client.post("/experiments/run", json={"app": "spmv"})
    assert no_matrix.status_code == 400
