"""Deterministic virtual-time simulator of the five scheduling policies.

Runs a cost array on p virtual workers under the same claiming rules as the
live engine, with integer time and zero-cost bookkeeping.  Victim selection
is a seeded RNG in :func:`simulate` and exhaustive branching in
:func:`exhaustive_small_check`.  Same-instant events settle in a fixed
order — chunk completions before idle wake-ups, ties by worker id — so a
(costs, p, policy, seed) tuple always yields the identical event list.

Steal sizing models the live owner/thief race: the thief sizes its take
from the victim's queue as observed at the victim's last dispatch (an
owner's in-flight claim may not yet be visible), then the cut is checked
against the current claim position and undone when it lands at or below
it — mirroring the engine's abort-and-restore discipline.  The
``skip_steal_guard`` hook disables that check purely so tests can prove it
is what prevents duplicated iterations.

Also home of :class:`RunningStats`, the Welford mean/variance accumulator
used by tests and metric validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from heapq import heappop, heappush
from random import Random
from typing import IO, Iterable, Optional, Sequence

from .scheduler import (
    AdaptPolarity,
    Dynamic,
    Guided,
    Ich,
    IterationRange,
    LoadClass,
    Policy,
    Static,
    Stealing,
    adapted_divisor,
    classify_load,
    guided_grant,
    initial_divisor,
    select_victim,
    static_partition,
)

__all__ = [
    "CheckResult",
    "DTransition",
    "RunningStats",
    "SimEvent",
    "SimResult",
    "DISPATCH",
    "COMPLETE",
    "ADAPT",
    "STEAL_ATTEMPT",
    "STEAL_SUCCESS",
    "EXIT",
    "event_record",
    "exhaustive_small_check",
    "export_trace",
    "push_sample",
    "simulate",
]

DISPATCH = "dispatch"
COMPLETE = "complete"
ADAPT = "adapt"
STEAL_ATTEMPT = "steal_attempt"
STEAL_SUCCESS = "steal_success"
EXIT = "exit"


class RunningStats:
    """Welford running mean / variance accumulator."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> "RunningStats":
        """Fold one sample into the running mean and squared-deviation sum."""
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        return self

    @property
    def variance(self) -> Optional[float]:
        """Sample variance m2/(count-1); None with fewer than two samples."""
        if self.count < 2:
            return None
        return self.m2 / (self.count - 1)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RunningStats(count={self.count}, mean={self.mean}, m2={self.m2})"


def push_sample(s: RunningStats, x: float) -> RunningStats:
    """Functional spelling of :meth:`RunningStats.push`."""
    return s.push(x)


@dataclass(frozen=True)
class SimEvent:
    """One simulator event; optional fields apply per kind."""

    time: int
    worker: int
    kind: str
    begin: Optional[int] = None
    end: Optional[int] = None
    d: Optional[int] = None
    k: Optional[int] = None
    load: Optional[LoadClass] = None
    old_d: Optional[int] = None
    new_d: Optional[int] = None
    k_self: Optional[int] = None
    k_snapshot: Optional[tuple[int, ...]] = None
    victim: Optional[int] = None
    victim_d: Optional[int] = None
    victim_k: Optional[int] = None
    old_k: Optional[int] = None
    new_k: Optional[int] = None
    ok: Optional[bool] = None


@dataclass(frozen=True)
class DTransition:
    """One divisor change: reason is 'low', 'high', or 'steal'."""

    time: int
    old: int
    new: int
    reason: str


@dataclass(frozen=True)
class SimResult:
    """Outcome of one simulation run."""

    makespan: int
    per_worker_k: tuple[int, ...]
    per_worker_completed: tuple[int, ...]
    per_worker_cost: tuple[int, ...]
    d_traces: tuple[tuple[DTransition, ...], ...]
    events: tuple[SimEvent, ...]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of exhaustive_small_check; truthiness mirrors ``ok``."""

    ok: bool
    branches: int
    violation: Optional[str] = None
    trace: tuple[SimEvent, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


class _RngChooser:
    """Victim selection by seeded RNG (the live engine's behavior)."""

    __slots__ = ("rng",)

    def __init__(self, seed: int) -> None:
        self.rng = Random(seed)

    def choose(self, thief_id: int, p: int) -> int:
        return select_victim(thief_id, p, self.rng)


class _ScriptedChooser:
    """Victim selection driven by a choice script, recording the tree shape.

    Candidates are the other workers in ascending id order.  Choice points
    past the end of the script default to index 0; the recorded (choices,
    degrees) let the caller enumerate the untaken siblings.
    """

    __slots__ = ("script", "choices", "degrees")

    def __init__(self, script: tuple[int, ...]) -> None:
        self.script = script
        self.choices: list[int] = []
        self.degrees: list[int] = []

    def choose(self, thief_id: int, p: int) -> int:
        position = len(self.choices)
        pick = self.script[position] if position < len(self.script) else 0
        self.choices.append(pick)
        self.degrees.append(p - 1)
        candidates = [i for i in range(p) if i != thief_id]
        return candidates[pick]


class _SimWorker:
    __slots__ = (
        "id",
        "begin",
        "end",
        "claim_base",
        "active",
        "active_begin",
        "active_end",
        "finish",
        "k",
        "d",
        "completed",
        "cost_done",
        "exited",
        "static_done",
    )

    def __init__(self, worker_id: int, begin: int, end: int, d: int) -> None:
        self.id = worker_id
        self.begin = begin
        self.end = end
        self.claim_base = begin
        self.active = False
        self.active_begin = 0
        self.active_end = 0
        self.finish = 0
        self.k = 0
        self.d = d
        self.completed = 0
        self.cost_done = 0
        self.exited = False
        self.static_done = False


class _Core:
    """Single simulation run; collects events, d-traces, and violations."""

    def __init__(
        self,
        costs: Sequence[int],
        p: int,
        policy: Policy,
        chooser,
        *,
        record_events: bool,
        skip_steal_guard: bool,
        max_events: int,
    ) -> None:
        self.costs = costs
        self.n = len(costs)
        self.p = p
        self.policy = policy
        self.chooser = chooser
        self.record = record_events
        self.skip_guard = skip_steal_guard
        self.max_events = max_events
        self.events: list[SimEvent] = []
        self.violation: Optional[str] = None
        self.makespan = 0
        self.event_count = 0

        prefix = [0] * (self.n + 1)
        acc = 0
        for i, c in enumerate(costs):
            acc += c
            prefix[i + 1] = acc
        self.prefix = prefix
        self.total_cost = acc
        self.counts = [0] * self.n
        self.total_completed = 0

        self.distributed = isinstance(policy, (Stealing, Ich))
        self.adaptive = isinstance(policy, Ich)
        self.shared = isinstance(policy, (Dynamic, Guided))
        self.cursor = 0

        d0 = initial_divisor(self.n, p) if self.adaptive else 1
        if self.distributed or isinstance(policy, Static):
            self.workers = [
                _SimWorker(i, *static_partition(self.n, p, i), d=d0)
                for i in range(p)
            ]
        else:
            self.workers = [_SimWorker(i, 0, 0, d=d0) for i in range(p)]
        self.d_traces: list[list[DTransition]] = [[] for _ in range(p)]
        self.heap: list[tuple[int, int, int]] = []

    # ---- bookkeeping -------------------------------------------------

    def _emit(self, event: SimEvent) -> None:
        if self.record:
            self.events.append(event)

    def _fail(self, message: str) -> None:
        if self.violation is None:
            self.violation = message

    def _check_d(self, w: _SimWorker) -> None:
        if not 1 <= w.d <= max(1, self.n):
            self._fail(
                f"worker {w.id} divisor {w.d} outside [1, {max(1, self.n)}]"
            )

    # ---- claiming ----------------------------------------------------

    def _grant(self, w: _SimWorker) -> Optional[IterationRange]:
        """Next range for w under the policy, or None when nothing local."""
        policy = self.policy
        if isinstance(policy, Static):
            if w.static_done or w.end <= w.begin:
                return None
            w.static_done = True
            return IterationRange(w.begin, w.end)
        if self.shared:
            remaining = self.n - self.cursor
            if remaining <= 0:
                return None
            if isinstance(policy, Dynamic):
                take = min(policy.chunk, remaining)
            else:
                take = guided_grant(remaining, self.p, policy.min_chunk)
            start = self.cursor
            self.cursor = start + take
            return IterationRange(start, start + take)
        remaining = w.end - w.begin
        if remaining <= 0:
            return None
        if self.adaptive:
            chunk = remaining // w.d
            if chunk < 1:
                chunk = 1
        else:
            chunk = policy.chunk
        take = min(chunk, remaining)
        return IterationRange(w.begin, w.begin + take)

    def _dispatch(self, w: _SimWorker, t: int) -> bool:
        r = self._grant(w)
        if r is None:
            return False
        if w.active:
            self._fail(f"worker {w.id} dispatched while active at t={t}")
            return False
        if not (0 <= r.begin < r.end <= self.n):
            self._fail(f"worker {w.id} claimed bad range {r} at t={t}")
            return False
        if self.distributed or isinstance(self.policy, Static):
            w.claim_base = w.begin
            w.begin = r.end
        counts = self.counts
        for i in range(r.begin, r.end):
            counts[i] += 1
            if counts[i] > 1:
                self._fail(
                    f"duplicate execution of iteration {i} "
                    f"(worker {w.id}, range [{r.begin},{r.end}), t={t})"
                )
        w.active = True
        w.active_begin = r.begin
        w.active_end = r.end
        w.finish = t + (self.prefix[r.end] - self.prefix[r.begin])
        self._emit(
            SimEvent(t, w.id, DISPATCH, begin=r.begin, end=r.end, d=w.d, k=w.k)
        )
        heappush(self.heap, (w.finish, 0, w.id))
        return True

    def _complete(self, w: _SimWorker, t: int) -> None:
        if not w.active:
            self._fail(f"completion for idle worker {w.id} at t={t}")
            return
        b, e = w.active_begin, w.active_end
        length = e - b
        w.active = False
        w.completed += length
        w.cost_done += self.prefix[e] - self.prefix[b]
        w.k += length
        w.claim_base = w.begin
        self.total_completed += length
        if t > self.makespan:
            self.makespan = t
        self._emit(SimEvent(t, w.id, COMPLETE, begin=b, end=e, d=w.d, k=w.k))
        if self.adaptive:
            census = tuple(s.k for s in self.workers)
            load = classify_load(w.k, census, self.policy.epsilon)
            old_d = w.d
            new_d = adapted_divisor(old_d, load, self.policy.polarity, self.n)
            w.d = new_d
            self._check_d(w)
            self._emit(
                SimEvent(
                    t,
                    w.id,
                    ADAPT,
                    load=load,
                    old_d=old_d,
                    new_d=new_d,
                    k_self=w.k,
                    k_snapshot=census,
                )
            )
            if new_d != old_d:
                self.d_traces[w.id].append(
                    DTransition(t, old_d, new_d, load.value)
                )

    # ---- stealing ----------------------------------------------------

    def _try_steal(self, thief: _SimWorker, victim: _SimWorker, t: int) -> bool:
        stale_begin = victim.claim_base if victim.active else victim.begin
        stale_remaining = victim.end - stale_begin
        if stale_remaining < 2:
            self._emit(
                SimEvent(t, thief.id, STEAL_ATTEMPT, victim=victim.id, ok=False)
            )
            return False
        chunksize = stale_remaining // 2
        new_end = victim.end - chunksize
        if not self.skip_guard and new_end <= victim.begin:
            self._emit(
                SimEvent(t, thief.id, STEAL_ATTEMPT, victim=victim.id, ok=False)
            )
            return False
        victim.end = new_end
        if not self.skip_guard and victim.end < victim.begin:
            self._fail(
                f"victim {victim.id} queue inverted after steal at t={t}"
            )
        stolen = IterationRange(new_end, new_end + chunksize)
        thief.begin = stolen.begin
        thief.claim_base = stolen.begin
        thief.end = stolen.end
        old_d = thief.d
        old_k = thief.k
        if self.adaptive:
            thief.d = max(1, (thief.d + victim.d) // 2)
            thief.k = (thief.k + victim.k) // 2
            self._check_d(thief)
            if thief.d != old_d:
                self.d_traces[thief.id].append(
                    DTransition(t, old_d, thief.d, "steal")
                )
        self._emit(
            SimEvent(t, thief.id, STEAL_ATTEMPT, victim=victim.id, ok=True)
        )
        self._emit(
            SimEvent(
                t,
                thief.id,
                STEAL_SUCCESS,
                begin=stolen.begin,
                end=stolen.end,
                victim=victim.id,
                victim_d=victim.d,
                victim_k=victim.k,
                old_d=old_d,
                new_d=thief.d,
                old_k=old_k,
                new_k=thief.k,
                d=thief.d,
                k=thief.k,
            )
        )
        return True

    def _exit(self, w: _SimWorker, t: int) -> None:
        if not w.exited:
            w.exited = True
            self._emit(SimEvent(t, w.id, EXIT, d=w.d, k=w.k))

    def _next_finish_after(self, t: int) -> Optional[int]:
        best: Optional[int] = None
        for s in self.workers:
            if s.active and (best is None or s.finish < best):
                best = s.finish
        return best

    def _wake(self, w: _SimWorker, t: int) -> None:
        if w.exited:
            return
        if self._dispatch(w, t):
            return
        if not self.distributed or self.p < 2:
            self._exit(w, t)
            return
        if self.total_completed >= self.n:
            self._exit(w, t)
            return
        victim = self.workers[self.chooser.choose(w.id, self.p)]
        if self._try_steal(w, victim, t):
            self._dispatch(w, t)
            return
        nxt = self._next_finish_after(t)
        if nxt is None:
            if self.total_completed >= self.n:
                self._exit(w, t)
            else:
                self._fail(
                    f"worker {w.id} stalled at t={t} with work outstanding"
                )
            return
        heappush(self.heap, (nxt, 1, w.id))

    # ---- main loop ---------------------------------------------------

    def run(self) -> None:
        for w in self.workers:
            heappush(self.heap, (0, 1, w.id))
        heap = self.heap
        while heap and self.violation is None:
            self.event_count += 1
            if self.event_count > self.max_events:
                self._fail(
                    f"event budget {self.max_events} exceeded (livelock?)"
                )
                break
            t, phase, wid = heappop(heap)
            w = self.workers[wid]
            if phase == 0:
                self._complete(w, t)
                if self.violation is not None:
                    break
            self._wake(w, t)
        if self.violation is None:
            for i, c in enumerate(self.counts):
                if c != 1:
                    self._fail(f"iteration {i} executed {c} times")
                    break
        if self.violation is None:
            executed = sum(s.cost_done for s in self.workers)
            if executed != self.total_cost:
                self._fail(
                    f"work conservation broken: executed cost {executed} "
                    f"!= total {self.total_cost}"
                )

    def result(self) -> SimResult:
        return SimResult(
            makespan=self.makespan,
            per_worker_k=tuple(s.k for s in self.workers),
            per_worker_completed=tuple(s.completed for s in self.workers),
            per_worker_cost=tuple(s.cost_done for s in self.workers),
            d_traces=tuple(tuple(trace) for trace in self.d_traces),
            events=tuple(self.events),
        )


def _as_cost_list(costs: Iterable[int]) -> list[int]:
    out = [int(c) for c in costs]
    for i, c in enumerate(out):
        if c < 1:
            raise ValueError(f"costs must be >= 1 (cost[{i}] = {c})")
    return out


def _validate_policy(policy: Policy) -> None:
    if not isinstance(policy, (Static, Dynamic, Guided, Stealing, Ich)):
        raise TypeError(f"unknown policy object: {policy!r}")


def simulate(
    costs: Iterable[int],
    p: int,
    policy: Policy,
    seed: int = 0,
    *,
    max_events: Optional[int] = None,
) -> SimResult:
    """Simulate ``costs`` on ``p`` virtual workers under ``policy``.

    Returns makespan, per-worker totals, per-worker divisor traces, and the
    full event list.  Deterministic for a fixed (costs, p, policy, seed).
    An empty cost array yields makespan 0.
    """
    cost_list = _as_cost_list(costs)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    _validate_policy(policy)
    budget = max_events if max_events is not None else 200 * (len(cost_list) + p) + 1000
    core = _Core(
        cost_list,
        p,
        policy,
        _RngChooser(seed),
        record_events=True,
        skip_steal_guard=False,
        max_events=budget,
    )
    core.run()
    if core.violation is not None:
        raise AssertionError(f"simulator invariant violated: {core.violation}")
    return core.result()


def exhaustive_small_check(
    costs: Iterable[int],
    p: int,
    policy: Policy,
    *,
    max_branches: int = 500_000,
    skip_steal_guard: bool = False,
) -> CheckResult:
    """Enumerate every steal-victim choice tree for a small instance.

    Replaces random victim selection with depth-first branching over all
    alternatives and validates every leaf: exactly-once coverage, in-bounds
    claims, legal divisors, and work conservation.  Returns the first
    violating trace, if any.  ``skip_steal_guard`` disables the steal abort
    check to demonstrate that the guard is load-bearing.
    """
    cost_list = _as_cost_list(costs)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    _validate_policy(policy)
    budget = 400 * (len(cost_list) + p) + 400
    stack: list[tuple[int, ...]] = [()]
    branches = 0
    while stack:
        script = stack.pop()
        branches += 1
        if branches > max_branches:
            return CheckResult(
                ok=False,
                branches=branches,
                violation=f"branch budget {max_branches} exceeded",
            )
        chooser = _ScriptedChooser(script)
        core = _Core(
            cost_list,
            p,
            policy,
            chooser,
            record_events=False,
            skip_steal_guard=skip_steal_guard,
            max_events=budget,
        )
        core.run()
        if core.violation is not None:
            replay = _ScriptedChooser(tuple(chooser.choices))
            traced = _Core(
                cost_list,
                p,
                policy,
                replay,
                record_events=True,
                skip_steal_guard=skip_steal_guard,
                max_events=budget,
            )
            traced.run()
            return CheckResult(
                ok=False,
                branches=branches,
                violation=core.violation,
                trace=tuple(traced.events),
            )
        choices = chooser.choices
        degrees = chooser.degrees
        for i in range(len(script), len(choices)):
            for alt in range(1, degrees[i]):
                stack.append(tuple(choices[:i]) + (alt,))
    return CheckResult(ok=True, branches=branches)


def event_record(ev: SimEvent) -> dict:
    """Flatten one event into a JSON-serializable dict (stable keys)."""
    record = {
        "time": ev.time,
        "worker": ev.worker,
        "kind": ev.kind,
        "begin": ev.begin,
        "end": ev.end,
        "d": ev.d,
        "k": ev.k,
    }
    if ev.victim is not None:
        record["victim"] = ev.victim
    if ev.load is not None:
        record["load"] = ev.load.value
    if ev.old_d is not None:
        record["old_d"] = ev.old_d
        record["new_d"] = ev.new_d
    if ev.ok is not None:
        record["ok"] = ev.ok
    return record


def export_trace(events: Iterable[SimEvent], stream: IO[str]) -> None:
    """Write events as line-delimited JSON records."""
    for ev in events:
        stream.write(json.dumps(event_record(ev)) + "\n")
