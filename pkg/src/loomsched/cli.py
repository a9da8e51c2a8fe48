"""Command-line front end.

`loomsched bench ...` (also installed as plain `bench`) runs a benchmark
experiment grid and renders a CSV or JSON report. The CLI is a thin client:
all work happens behind the HTTP service API, served in-process by default
or remotely with --server. `loomsched serve` starts the HTTP service.

Exit codes: 0 full success, 1 usage/runtime error, 2 when any experiment
cell was flagged (output mismatch or timer-resolution warning).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

APPS = ("synth", "spmv", "bfs")
POLICY_CHOICES = ("static", "dynamic", "guided", "stealing", "ich")
DEFAULT_TRACE_MAX_N = 20_000


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit 1 (2 is reserved for
    flagged-cell runs)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


class ServiceError(Exception):
    pass


class ServiceClient:
    """Minimal POST/GET wrapper over the in-process app or a remote server."""

    def __init__(self, server: str | None = None) -> None:
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.filterwarnings(
                    "ignore", message=".*starlette.testclient.*"
                )
                from fastapi.testclient import TestClient

            from loomsched.service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except Exception as exc:
            raise ServiceError(f"request to {path} failed: {exc}") from exc
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            raise ServiceError(f"{path}: HTTP {resp.status_code}: {detail}")
        return resp.json()

    def close(self) -> None:
        self._client.close()


def _parse_thread_list(text: str) -> list[int]:
    try:
        threads = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"invalid thread list {text!r}; expected e.g. 1,2,4,8")
    if not threads or any(t < 1 for t in threads):
        raise ValueError(f"invalid thread list {text!r}; entries must be >= 1")
    return threads


def resolve_threads(flag_value: str | None) -> list[int] | None:
    """Thread grid precedence: --threads flag, LOOMSCHED_THREADS, else None
    (the service applies its default grid)."""
    if flag_value is not None:
        return _parse_thread_list(flag_value)
    env = os.environ.get("LOOMSCHED_THREADS")
    if env:
        return _parse_thread_list(env)
    return None


def add_bench_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--app", required=True, choices=APPS)
    parser.add_argument("--policy", choices=POLICY_CHOICES, default=None,
                        help="single policy to run (default: all five)")
    parser.add_argument("--chunk", type=int, default=None,
                        help="collapse chunk grids to this one value")
    parser.add_argument("--epsilon", type=float, default=None,
                        help="collapse the epsilon grid to this one value")
    parser.add_argument("--polarity", choices=("paper", "figure"),
                        default="paper")
    parser.add_argument("--threads", default=None, metavar="LIST",
                        help="comma-separated thread counts, e.g. 1,2,4,8")
    parser.add_argument("--dist", choices=("linear", "exp-inc", "exp-dec"),
                        default="exp-dec")
    parser.add_argument("--beta", type=float, default=100_000.0)
    parser.add_argument("--input", default=None, metavar="PATH",
                        help="Matrix Market file (spmv)")
    parser.add_argument("--graph", choices=("uniform", "scalefree"),
                        default="uniform")
    parser.add_argument("--gamma", type=float, default=2.3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--pin", choices=("on", "off"), default="on")
    parser.add_argument("--out", default=None, metavar="PATH")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--trace", action="store_true",
                        help="also write a simulated scheduling trace")
    # Extensions beyond the canonical surface:
    parser.add_argument("--n", type=int, default=100_000,
                        help="synth iteration count")
    parser.add_argument("--nv", type=int, default=10_000,
                        help="bfs vertex count")
    parser.add_argument("--max-degree", type=int, default=10,
                        help="uniform-graph degree bound")
    parser.add_argument("--server", default=None, metavar="URL",
                        help="remote service URL (default: run in-process)")


def build_request(args: argparse.Namespace) -> dict:
    payload: dict = {
        "app": args.app,
        "policies": [args.policy] if args.policy else list(POLICY_CHOICES),
        "polarity": args.polarity,
        "repetitions": args.reps,
        "seed": args.seed,
        "pin": args.pin == "on",
    }
    threads = resolve_threads(args.threads)
    if threads is not None:
        payload["threads"] = threads
    if args.chunk is not None:
        payload["dynamic_chunks"] = [args.chunk]
        payload["guided_chunks"] = [args.chunk]
        payload["stealing_chunks"] = [args.chunk]
    if args.epsilon is not None:
        payload["epsilons"] = [args.epsilon]
    if args.app == "synth":
        payload["synth"] = {
            "distribution": args.dist,
            "n": args.n,
            "beta": args.beta,
            "seed": args.seed,
        }
    elif args.app == "spmv":
        if not args.input:
            raise ValueError("bench --app spmv requires --input PATH")
        payload["matrix"] = {"path": str(Path(args.input).absolute())}
    else:
        payload["graph"] = {
            "kind": args.graph,
            "nv": args.nv,
            "max_degree": args.max_degree,
            "gamma": args.gamma,
            "seed": args.seed,
            "source": 0,
        }
    return payload


def _trace_costs(client: ServiceClient, args: argparse.Namespace) -> list[int]:
    if args.app == "synth":
        wl = client.post(
            "/workloads/generate",
            {
                "n": args.n,
                "distribution": args.dist,
                "beta": args.beta,
                "seed": args.seed,
            },
        )
        return wl["costs"]
    content = Path(args.input).read_text(encoding="ascii")
    parsed = client.post("/matrices/parse", {"content": content})
    return [max(1, c) for c in parsed["row_counts"]]


def _emit_trace(
    client: ServiceClient, args: argparse.Namespace, threads: list[int] | None
) -> None:
    if args.app == "bfs":
        sys.stderr.write(
            "warning: --trace is not supported for bfs; skipping\n"
        )
        return
    costs = _trace_costs(client, args)
    cap = int(os.environ.get("LOOMSCHED_TRACE_MAX_N", DEFAULT_TRACE_MAX_N))
    if len(costs) > cap:
        sys.stderr.write(
            f"warning: trace truncated to the first {cap} of "
            f"{len(costs)} iterations\n"
        )
        costs = costs[:cap]
    if threads is None:
        from loomsched.harness import default_thread_grid

        threads = list(default_thread_grid())
    policy = {
        "name": args.policy or "ich",
        "polarity": args.polarity,
    }
    if args.chunk is not None:
        policy["chunk"] = args.chunk
    if args.epsilon is not None:
        policy["epsilon"] = args.epsilon
    sim = client.post(
        "/simulate",
        {
            "costs": costs,
            "p": max(threads),
            "policy": policy,
            "seed": args.seed,
            "include_events": True,
        },
    )
    trace_path = Path(
        f"{args.out}.trace.jsonl" if args.out else "loomsched-trace.jsonl"
    )
    with open(trace_path, "w", encoding="utf-8") as fh:
        for ev in sim["events"]:
            fh.write(json.dumps(ev) + "\n")
    sys.stderr.write(
        f"trace: {len(sim['events'])} events "
        f"(makespan {sim['makespan']} units) -> {trace_path}\n"
    )


def run_bench(args: argparse.Namespace) -> int:
    try:
        return _run_bench(args)
    except ServiceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def _run_bench(args: argparse.Namespace) -> int:
    payload = build_request(args)
    client = ServiceClient(args.server)
    try:
        resp = client.post("/experiments/run", payload)
        records = resp["records"]
        flags = resp["flags"]
        for f in flags:
            sys.stderr.write(
                f"warning: [{f['kind']}] {f['policy']}"
                f"(param={f['param']}) p={f['threads']}: {f['detail']}\n"
            )
        if records:
            rendered = client.post(
                "/reports/render",
                {"records": records, "format": args.format},
            )
            content = rendered["content"]
            if args.out:
                out = Path(args.out)
                if out.parent != Path("."):
                    out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(content, encoding="utf-8")
                sys.stderr.write(f"report: {len(records)} cells -> {out}\n")
            else:
                sys.stdout.write(content)
        else:
            sys.stderr.write("no records produced; every cell was flagged\n")
        if args.trace:
            _emit_trace(client, args, resolve_threads(args.threads))
    finally:
        client.close()
    return 2 if flags else 0


def run_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from loomsched.service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(
        prog="loomsched",
        description="Loop-scheduling benchmark harness and service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    bench_parser = sub.add_parser(
        "bench", help="run a benchmark experiment grid"
    )
    add_bench_args(bench_parser)
    serve_parser = sub.add_parser("serve", help="start the HTTP service")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    if args.command == "bench":
        return run_bench(args)
    return run_serve(args)


def bench_entry(argv: list[str] | None = None) -> int:
    parser = _Parser(
        prog="bench", description="Run a benchmark experiment grid."
    )
    add_bench_args(parser)
    return run_bench(parser.parse_args(argv))


if __name__ == "__main__":
    raise SystemExit(main())
