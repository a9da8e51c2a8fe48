"""Policy-driven parallel-for engine with per-worker queues and work stealing.

Five scheduling policies drive one range-claiming machinery:

* ``Static`` — one contiguous block per worker, no runtime scheduling.
* ``Dynamic`` — fixed-size chunks claimed from a shared cursor.
* ``Guided`` — shared-cursor grants proportional to remaining / p, with a
  floor, so grants shrink as the loop drains.
* ``Stealing`` — per-worker queues with a fixed chunk; idle workers steal
  half of a random victim's unclaimed range.
* ``Ich`` — per-worker queues whose chunk is ``remaining // d``; the divisor
  d doubles or halves based on how the worker's completed-iteration count k
  compares to the all-worker mean, and steals average (d, k) into the thief.

The distributed policies follow a THE-style queue discipline: the owner
claims optimistically by advancing ``begin`` without the lock and repairs
under the lock on collision, while thieves operate under the victim's lock
and only ever lower ``end``.  Safety relies on ``begin`` having a single
writer (the owner) and ``end`` being lowered exclusively under the lock.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import Callable, ClassVar, NamedTuple, Optional, Sequence, Union

from ._timing import get_timer_slack_ns, set_timer_slack_ns

__all__ = [
    "AdaptPolarity",
    "Dynamic",
    "Guided",
    "Ich",
    "IterationRange",
    "LoadClass",
    "LoopReport",
    "Policy",
    "SharedCursor",
    "Static",
    "Stealing",
    "WorkerReport",
    "WorkerState",
    "adapt_chunk",
    "adapted_divisor",
    "classify_load",
    "dynamic_next",
    "guided_grant",
    "guided_next",
    "init_queues",
    "initial_divisor",
    "make_policy",
    "next_chunk_size",
    "parallel_for",
    "select_victim",
    "static_partition",
    "steal",
    "try_local_work",
]

# Microsleep between failed steal rounds so idle thieves release the CPU to
# the workers that still hold work.
_PARK_SECONDS = 5e-05


class IterationRange(NamedTuple):
    """Half-open range [begin, end) of loop iterations."""

    begin: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.begin


class LoadClass(Enum):
    """Where a worker's completed count sits relative to the census band."""

    LOW = "low"
    NORMAL = "normal"
    HIGH = "high"


class AdaptPolarity(Enum):
    """Direction the divisor moves for Low / High classified workers.

    ``PAPER``: Low doubles d (shrinking that worker's chunks) and High halves
    it.  ``FIGURE`` is the mirror image: High doubles d, Low halves it.  Both
    conventions are selectable because either direction is defensible; the
    default everywhere is ``PAPER``.
    """

    PAPER = "paper"
    FIGURE = "figure"

    @classmethod
    def coerce(cls, value: "AdaptPolarity | str") -> "AdaptPolarity":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"polarity must be one of {[m.value for m in cls]}, got {value!r}"
            ) from None


@dataclass(frozen=True)
class Static:
    """Fixed block partition: worker i owns exactly its initial block."""

    name: ClassVar[str] = "static"


@dataclass(frozen=True)
class Dynamic:
    """Shared-cursor dispatch of fixed-size chunks."""

    chunk: int = 1
    name: ClassVar[str] = "dynamic"

    def __post_init__(self) -> None:
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")


@dataclass(frozen=True)
class Guided:
    """Shared-cursor dispatch with grants of max(remaining // p, min_chunk)."""

    min_chunk: int = 1
    name: ClassVar[str] = "guided"

    def __post_init__(self) -> None:
        if self.min_chunk < 1:
            raise ValueError(f"min_chunk must be >= 1, got {self.min_chunk}")


@dataclass(frozen=True)
class Stealing:
    """Per-worker queues with a fixed claim size plus half-stealing."""

    chunk: int = 1
    name: ClassVar[str] = "stealing"

    def __post_init__(self) -> None:
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")


@dataclass(frozen=True)
class Ich:
    """Adaptive-divisor policy: chunk = remaining // d, d driven by census."""

    epsilon: float = 0.25
    polarity: AdaptPolarity = AdaptPolarity.PAPER
    name: ClassVar[str] = "ich"

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        object.__setattr__(self, "polarity", AdaptPolarity.coerce(self.polarity))


Policy = Union[Static, Dynamic, Guided, Stealing, Ich]

_POLICY_NAMES = ("static", "dynamic", "guided", "stealing", "ich")


def make_policy(
    name: str,
    *,
    chunk: Optional[int] = None,
    epsilon: Optional[float] = None,
    polarity: "AdaptPolarity | str" = AdaptPolarity.PAPER,
) -> Policy:
    """Build a policy from loosely-typed CLI / request fields."""
    if name == "static":
        return Static()
    if name == "dynamic":
        return Dynamic(chunk if chunk is not None else 1)
    if name == "guided":
        return Guided(chunk if chunk is not None else 1)
    if name == "stealing":
        return Stealing(chunk if chunk is not None else 1)
    if name == "ich":
        return Ich(
            epsilon if epsilon is not None else 0.25,
            AdaptPolarity.coerce(polarity),
        )
    raise ValueError(f"unknown policy {name!r}; expected one of {_POLICY_NAMES}")


class WorkerState:
    """Mutable per-worker scheduling state.

    ``begin`` is advanced only by the owning worker (optimistically, with
    rollback); ``end`` is lowered only by thieves holding ``lock``.  ``k``
    and ``d`` belong to the owner, except that a successful thief rewrites
    its *own* pair; peers read ``k`` without synchronization.  ``completed``
    has a single writer (the owner) and is summed by everyone for
    termination detection.
    """

    __slots__ = (
        "id",
        "begin",
        "end",
        "k",
        "d",
        "initial_len",
        "lock",
        "completed",
        "steals_attempted",
        "steals_succeeded",
        "adapt_events",
    )

    def __init__(self, worker_id: int, begin: int, end: int, d: int = 1) -> None:
        self.id = worker_id
        self.begin = begin
        self.end = end
        self.k = 0
        self.d = d
        self.initial_len = end - begin
        self.lock = threading.Lock()
        self.completed = 0
        self.steals_attempted = 0
        self.steals_succeeded = 0
        self.adapt_events = {cls: 0 for cls in LoadClass}

    def remaining(self) -> int:
        return self.end - self.begin

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"WorkerState(id={self.id}, [{self.begin},{self.end}), "
            f"k={self.k}, d={self.d})"
        )


def initial_divisor(n: int, p: int) -> int:
    """Starting divisor: p, clamped into the legal band [1, n]."""
    if n < 1:
        return 1
    return min(p, n)


def static_partition(n: int, p: int, i: int) -> IterationRange:
    """Worker i's block under the ceil(n/p) partition; trailing blocks may
    be empty when p does not divide n."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not 0 <= i < p:
        raise ValueError(f"worker index {i} out of range for p={p}")
    block = -(-n // p) if n else 0
    begin = min(i * block, n)
    end = min(begin + block, n)
    return IterationRange(begin, end)


def init_queues(n: int, p: int) -> list[WorkerState]:
    """Block-partition [0, n) across p workers, with d = min(p, n), k = 0.

    The block is ceil(n/p) long, so the first local chunk a worker claims
    (remaining // d) holds roughly n/p**2 iterations.
    """
    d0 = initial_divisor(n, p)
    states = []
    for i in range(p):
        r = static_partition(n, p, i)
        states.append(WorkerState(i, r.begin, r.end, d=d0))
    return states


def next_chunk_size(w: WorkerState) -> int:
    """remaining // d clamped to [1, remaining]; 0 on an empty queue."""
    remaining = w.end - w.begin
    if remaining <= 0:
        return 0
    chunk = remaining // w.d
    return chunk if chunk >= 1 else 1


def classify_load(k_self: int, k_all: Sequence[int], epsilon: float) -> LoadClass:
    """Compare k_self to the census mean within a band of width eps*mean.

    The census covers all p workers, the caller included.  Strictly below
    mean - delta is LOW, strictly above mean + delta is HIGH, the inclusive
    band between is NORMAL.
    """
    if not k_all:
        raise ValueError("census must be non-empty")
    mean = sum(k_all) / len(k_all)
    delta = epsilon * mean
    if k_self < mean - delta:
        return LoadClass.LOW
    if k_self > mean + delta:
        return LoadClass.HIGH
    return LoadClass.NORMAL


def adapted_divisor(d: int, load: LoadClass, polarity: AdaptPolarity, n: int) -> int:
    """Pure divisor update rule: double / halve by class, clamp to [1, n]."""
    if load is LoadClass.NORMAL:
        return d
    grow = (load is LoadClass.LOW) == (polarity is AdaptPolarity.PAPER)
    if grow:
        return min(d * 2, max(1, n))
    return max(1, d // 2)


def adapt_chunk(
    w: WorkerState, load: LoadClass, polarity: AdaptPolarity, n: int
) -> None:
    """Apply the divisor update to w after a whole chunk finished.

    Tallies the classification in ``w.adapt_events`` whatever the outcome.
    """
    w.adapt_events[load] += 1
    w.d = adapted_divisor(w.d, load, polarity, n)


def try_local_work(w: WorkerState, chunk: int) -> Optional[IterationRange]:
    """Owner-side claim of up to ``chunk`` iterations from w's own queue.

    Fast path: advance ``begin`` without the lock, then re-read ``end``; if
    the claim stayed inside the queue it stands.  On collision with a thief
    the claim is rolled back and settled under the lock, taking
    min(chunk, remaining).  Returns None when the queue is empty.
    """
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    old = w.begin
    new = old + chunk
    w.begin = new
    if new <= w.end:
        return IterationRange(old, new)
    w.begin = old
    with w.lock:
        remaining = w.end - w.begin
        if remaining <= 0:
            return None
        take = chunk if chunk < remaining else remaining
        old = w.begin
        w.begin = old + take
        return IterationRange(old, old + take)


def steal(
    thief: WorkerState, victim: WorkerState, *, average_stats: bool = True
) -> Optional[IterationRange]:
    """Thief-side claim of the upper half of the victim's unclaimed range.

    Under the victim's lock: take half the visible remainder by lowering
    ``victim.end``, then undo the cut if it landed at or below a ``begin``
    that the owner advanced concurrently.  A victim with fewer than two
    visible iterations is left alone.  On success the stolen range becomes
    the thief's entire queue, and with ``average_stats`` the thief's (d, k)
    become the element-wise means of thief and victim (the victim's stats
    are never written).
    """
    with victim.lock:
        remaining = victim.end - victim.begin
        if remaining < 2:
            return None
        chunksize = remaining // 2
        new_end = victim.end - chunksize
        victim.end = new_end
        if new_end <= victim.begin:
            victim.end = new_end + chunksize
            return None
        stolen = IterationRange(new_end, new_end + chunksize)
        victim_d = victim.d
        victim_k = victim.k
    with thief.lock:
        thief.begin = stolen.begin
        thief.end = stolen.end
    if average_stats:
        thief.d = max(1, (thief.d + victim_d) // 2)
        thief.k = (thief.k + victim_k) // 2
    return stolen


def select_victim(thief_id: int, p: int, rng: Random) -> int:
    """Uniform choice over the p - 1 workers other than the thief."""
    if p < 2:
        raise ValueError(f"victim selection needs p >= 2, got p={p}")
    if not 0 <= thief_id < p:
        raise ValueError(f"thief_id {thief_id} out of range for p={p}")
    v = rng.randrange(p - 1)
    return v if v < thief_id else v + 1


class SharedCursor:
    """Lock-guarded shared claim position for dynamic / guided dispatch."""

    __slots__ = ("position", "lock")

    def __init__(self) -> None:
        self.position = 0
        self.lock = threading.Lock()


def dynamic_next(cursor: SharedCursor, chunk: int, n: int) -> Optional[IterationRange]:
    """Claim the next fixed-size chunk (short tail allowed); None when done."""
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    with cursor.lock:
        start = cursor.position
        if start >= n:
            return None
        end = start + chunk
        if end > n:
            end = n
        cursor.position = end
    return IterationRange(start, end)


def guided_grant(remaining: int, p: int, min_chunk: int) -> int:
    """Pure guided grant rule: min(remaining, max(remaining // p, min_chunk))."""
    grant = remaining // p
    if grant < min_chunk:
        grant = min_chunk
    return grant if grant <= remaining else remaining


def guided_next(
    cursor: SharedCursor, min_chunk: int, n: int, p: int
) -> Optional[IterationRange]:
    """Claim a remaining-proportional grant; None when the loop is drained."""
    if min_chunk < 1:
        raise ValueError(f"min_chunk must be >= 1, got {min_chunk}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    with cursor.lock:
        start = cursor.position
        remaining = n - start
        if remaining <= 0:
            return None
        grant = guided_grant(remaining, p, min_chunk)
        cursor.position = start + grant
    return IterationRange(start, start + grant)


@dataclass(frozen=True)
class WorkerReport:
    """Read-only per-worker diagnostics snapshot after a loop completes."""

    worker_id: int
    initial_len: int
    completed: int
    k: int
    d: int
    steals_attempted: int
    steals_succeeded: int
    adapt_low: int
    adapt_normal: int
    adapt_high: int


@dataclass(frozen=True)
class LoopReport:
    """Loop-level diagnostics returned by parallel_for."""

    n: int
    p: int
    workers: tuple[WorkerReport, ...]

    @property
    def total_completed(self) -> int:
        return sum(w.completed for w in self.workers)

    @property
    def total_steals(self) -> int:
        return sum(w.steals_succeeded for w in self.workers)

    @property
    def total_adapt_events(self) -> int:
        return sum(w.adapt_low + w.adapt_normal + w.adapt_high for w in self.workers)


RangeBody = Callable[[int, int, int], None]


class _Run:
    """One parallel_for execution: workers, error funnel, diagnostics."""

    def __init__(
        self,
        n: int,
        body: Callable,
        policy: Policy,
        p: int,
        seed: Optional[int],
        pin: bool,
        range_body: bool,
    ) -> None:
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        if p < 1:
            raise ValueError(f"p must be >= 1, got {p}")
        if not callable(body):
            raise TypeError("body must be callable")
        self.n = n
        self.p = p
        self.policy = policy
        self.pin = pin
        self.abort = threading.Event()
        self.error: Optional[BaseException] = None
        self.error_lock = threading.Lock()
        if range_body:
            self.run_body: RangeBody = body
        else:
            def _indexed(begin: int, end: int, worker_id: int, _body=body) -> None:
                for i in range(begin, end):
                    _body(i)

            self.run_body = _indexed

        if isinstance(policy, (Stealing, Ich)):
            self.states = init_queues(n, p)
            self.worker_fn = self._queue_worker
        elif isinstance(policy, (Dynamic, Guided)):
            self.cursor = SharedCursor()
            self.states = [WorkerState(i, 0, 0) for i in range(p)]
            self.worker_fn = self._shared_worker
        elif isinstance(policy, Static):
            self.states = [
                WorkerState(i, *static_partition(n, p, i)) for i in range(p)
            ]
            self.worker_fn = self._static_worker
        else:
            raise TypeError(f"unknown policy object: {policy!r}")

        base_seed = seed if seed is not None else time.time_ns()
        self.rngs = [Random((base_seed << 20) ^ i) for i in range(p)]
        if pin:
            try:
                self.cpu_ids = sorted(os.sched_getaffinity(0))
            except (AttributeError, OSError):  # pragma: no cover - non-Linux
                self.cpu_ids = []
        else:
            self.cpu_ids = []

    # ---- per-policy worker loops -------------------------------------

    def _static_worker(self, w: WorkerState, rng: Random) -> None:
        if w.end > w.begin and not self.abort.is_set():
            begin, end = w.begin, w.end
            self.run_body(begin, end, w.id)
            w.begin = end
            length = end - begin
            w.k = length
            w.completed = length

    def _shared_worker(self, w: WorkerState, rng: Random) -> None:
        policy = self.policy
        cursor = self.cursor
        n = self.n
        if isinstance(policy, Dynamic):
            chunk = policy.chunk

            def claim() -> Optional[IterationRange]:
                return dynamic_next(cursor, chunk, n)

        else:
            min_chunk = policy.min_chunk
            p = self.p

            def claim() -> Optional[IterationRange]:
                return guided_next(cursor, min_chunk, n, p)

        while not self.abort.is_set():
            r = claim()
            if r is None:
                return
            self.run_body(r.begin, r.end, w.id)
            length = r.end - r.begin
            w.completed += length
            w.k += length

    def _queue_worker(self, w: WorkerState, rng: Random) -> None:
        policy = self.policy
        adaptive = isinstance(policy, Ich)
        states = self.states
        n, p = self.n, self.p
        abort = self.abort
        while True:
            # Drain the local queue.
            while not abort.is_set():
                if adaptive:
                    chunk = next_chunk_size(w)
                    if chunk == 0:
                        break
                else:
                    chunk = policy.chunk
                r = try_local_work(w, chunk)
                if r is None:
                    break
                self.run_body(r.begin, r.end, w.id)
                length = r.end - r.begin
                w.completed += length
                w.k += length
                if adaptive:
                    census = [s.k for s in states]
                    load = classify_load(w.k, census, policy.epsilon)
                    adapt_chunk(w, load, policy.polarity, n)
            if abort.is_set() or p == 1:
                return
            # Steal until new work lands in the local queue or all work is done.
            fails = 0
            stolen: Optional[IterationRange] = None
            while stolen is None:
                if abort.is_set():
                    return
                done = 0
                for s in states:
                    done += s.completed
                if done >= n:
                    return
                for _ in range(2 * p):
                    victim = states[select_victim(w.id, p, rng)]
                    w.steals_attempted += 1
                    stolen = steal(w, victim, average_stats=adaptive)
                    if stolen is not None:
                        w.steals_succeeded += 1
                        break
                    fails += 1
                    if fails % p == 0:
                        time.sleep(0)
                else:
                    time.sleep(_PARK_SECONDS)

    # ---- orchestration ----------------------------------------------

    def _pin_worker(self, index: int) -> None:
        if self.cpu_ids:
            try:
                os.sched_setaffinity(0, {self.cpu_ids[index % len(self.cpu_ids)]})
            except OSError:  # pragma: no cover - affinity may be restricted
                pass

    def _guarded(self, w: WorkerState, rng: Random) -> None:
        try:
            self._pin_worker(w.id)
            set_timer_slack_ns()
            self.worker_fn(w, rng)
        except BaseException as exc:  # noqa: BLE001 - funneled to the caller
            with self.error_lock:
                if self.error is None:
                    self.error = exc
            self.abort.set()

    def _run_inline(self) -> None:
        # p == 1: run in the caller's thread, restoring its affinity/slack.
        old_slack = get_timer_slack_ns()
        old_affinity = None
        if self.cpu_ids:
            try:
                old_affinity = os.sched_getaffinity(0)
            except (AttributeError, OSError):  # pragma: no cover
                old_affinity = None
        try:
            self._guarded(self.states[0], self.rngs[0])
        finally:
            if old_affinity is not None:
                try:
                    os.sched_setaffinity(0, old_affinity)
                except OSError:  # pragma: no cover
                    pass
            if old_slack is not None and old_slack > 0:
                set_timer_slack_ns(old_slack)

    def run(self) -> LoopReport:
        if self.n > 0:
            if self.p == 1:
                self._run_inline()
            else:
                threads = [
                    threading.Thread(
                        target=self._guarded,
                        args=(self.states[i], self.rngs[i]),
                        name=f"loomsched-w{i}",
                    )
                    for i in range(self.p)
                ]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
        if self.error is not None:
            raise self.error
        workers = tuple(
            WorkerReport(
                worker_id=s.id,
                initial_len=s.initial_len,
                completed=s.completed,
                k=s.k,
                d=s.d,
                steals_attempted=s.steals_attempted,
                steals_succeeded=s.steals_succeeded,
                adapt_low=s.adapt_events[LoadClass.LOW],
                adapt_normal=s.adapt_events[LoadClass.NORMAL],
                adapt_high=s.adapt_events[LoadClass.HIGH],
            )
            for s in self.states
        )
        return LoopReport(n=self.n, p=self.p, workers=workers)


def parallel_for(
    n: int,
    body: Callable,
    policy: Policy,
    p: int,
    *,
    seed: Optional[int] = None,
    pin: bool = False,
    range_body: bool = False,
) -> LoopReport:
    """Run ``body`` over [0, n) under ``policy`` with ``p`` workers.

    Blocks until every iteration has executed exactly once, then returns
    per-worker diagnostics.  By default ``body`` receives a single iteration
    index; with ``range_body=True`` it receives ``(begin, end, worker_id)``
    and must cover the whole half-open range itself.  A body exception
    aborts outstanding work at the next chunk boundary and re-raises in the
    caller.  ``seed`` fixes victim selection; ``pin`` binds worker i to
    logical CPU i mod available.  With p == 1 the loop runs inline in the
    calling thread.
    """
    return _Run(n, body, policy, p, seed, pin, range_body).run()
