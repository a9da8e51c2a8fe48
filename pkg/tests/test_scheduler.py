"""Unit tests for the core scheduling engine and its claiming operations."""

from __future__ import annotations

import threading
from random import Random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loomsched.scheduler import (
    AdaptPolarity,
    Dynamic,
    Guided,
    Ich,
    IterationRange,
    LoadClass,
    SharedCursor,
    Static,
    Stealing,
    WorkerState,
    adapt_chunk,
    adapted_divisor,
    classify_load,
    dynamic_next,
    guided_next,
    init_queues,
    make_policy,
    next_chunk_size,
    parallel_for,
    select_victim,
    static_partition,
    steal,
    try_local_work,
)

ALL_POLICIES = [Static(), Dynamic(2), Guided(1), Stealing(2), Ich(0.25)]


# ---------------------------------------------------------------- types ----


def test_iteration_range_length():
    r = IterationRange(10, 25)
    assert r.begin == 10 and r.end == 25 and r.length == 15


def test_policy_validation():
    with pytest.raises(ValueError):
        Dynamic(0)
    with pytest.raises(ValueError):
        Stealing(-1)
    with pytest.raises(ValueError):
        Guided(0)
    with pytest.raises(ValueError):
        Ich(0.0)
    with pytest.raises(ValueError):
        Ich(1.0)


def test_make_policy_round_trip():
    assert make_policy("static") == Static()
    assert make_policy("dynamic", chunk=3) == Dynamic(3)
    assert make_policy("guided", chunk=2) == Guided(2)
    assert make_policy("stealing", chunk=64) == Stealing(64)
    assert make_policy("ich", epsilon=0.33, polarity="figure") == Ich(
        0.33, AdaptPolarity.FIGURE
    )
    with pytest.raises(ValueError):
        make_policy("taskloop")
    with pytest.raises(ValueError):
        make_policy("ich", polarity="sideways")


# ---------------------------------------------------------- partitioning ----


def test_init_queues_first_chunk_is_n_over_p_squared():
    states = init_queues(1_000_000, 28)
    assert len(states) == 28
    assert states[0].begin == 0 and states[0].end == 35715
    assert all(s.d == 28 and s.k == 0 for s in states)
    assert next_chunk_size(states[0]) == 1275  # ~ n / p**2


def test_init_queues_covers_and_partitions():
    for n, p in [(10, 3), (7, 7), (100, 8), (5, 16), (0, 4), (1, 1)]:
        states = init_queues(n, p)
        spans = [(s.begin, s.end) for s in states]
        covered = []
        for b, e in spans:
            assert 0 <= b <= e <= n
            covered.extend(range(b, e))
        assert covered == list(range(n))


def test_init_queues_empty_tails():
    states = init_queues(10, 16)
    empties = [s for s in states if s.remaining() == 0]
    assert len(empties) == 6


def test_initial_divisor_clamped_when_p_exceeds_n():
    states = init_queues(10, 16)
    assert all(s.d == 10 for s in states)


def test_static_partition_blocks():
    assert static_partition(10, 3, 0) == (0, 4)
    assert static_partition(10, 3, 1) == (4, 8)
    assert static_partition(10, 3, 2) == (8, 10)
    with pytest.raises(ValueError):
        static_partition(10, 3, 3)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 500), p=st.integers(1, 32))
def test_static_partition_property(n, p):
    ranges = [static_partition(n, p, i) for i in range(p)]
    assert ranges[0].begin == 0
    for a, b in zip(ranges, ranges[1:]):
        assert a.end == b.begin
    assert ranges[-1].end == n
    sizes = {r.length for r in ranges}
    assert max(sizes) - min(sizes) <= (-(-n // p) if n else 0)


# ------------------------------------------------------------ chunk math ----


def test_next_chunk_size_examples():
    w = WorkerState(0, 0, 1000, d=4)
    assert next_chunk_size(w) == 250
    w = WorkerState(0, 0, 3, d=8)
    assert next_chunk_size(w) == 1  # floors at one iteration
    w = WorkerState(0, 5, 5, d=2)
    assert next_chunk_size(w) == 0


def test_classify_load_examples():
    assert classify_load(5, [5, 15, 15, 15], 0.25) is LoadClass.LOW
    assert classify_load(20, [20, 8, 8, 8], 0.25) is LoadClass.HIGH
    assert classify_load(12, [5, 15, 15, 15], 0.25) is LoadClass.NORMAL


def test_classify_load_band_is_inclusive():
    # mean 10, delta 5: the band edges 5 and 15 classify NORMAL.
    assert classify_load(15, [10, 10], 0.5) is LoadClass.NORMAL
    assert classify_load(5, [10, 10], 0.5) is LoadClass.NORMAL
    assert classify_load(16, [10, 10], 0.5) is LoadClass.HIGH
    assert classify_load(4, [10, 10], 0.5) is LoadClass.LOW


def test_classify_load_zero_census():
    # All-zero census: band collapses to {0}; zero is NORMAL.
    assert classify_load(0, [0, 0, 0], 0.25) is LoadClass.NORMAL


@settings(max_examples=80, deadline=None)
@given(
    ks=st.lists(st.integers(0, 10_000), min_size=1, max_size=16),
    scale=st.integers(1, 50),
    eps=st.floats(0.01, 0.99),
)
def test_classify_load_scale_invariant(ks, scale, eps):
    base = classify_load(ks[0], ks, eps)
    scaled = classify_load(ks[0] * scale, [k * scale for k in ks], eps)
    assert base is scaled


def test_adapted_divisor_rules():
    assert adapted_divisor(4, LoadClass.LOW, AdaptPolarity.PAPER, 10**6) == 8
    assert adapted_divisor(4, LoadClass.HIGH, AdaptPolarity.PAPER, 10**6) == 2
    assert adapted_divisor(4, LoadClass.LOW, AdaptPolarity.FIGURE, 10**6) == 2
    assert adapted_divisor(4, LoadClass.HIGH, AdaptPolarity.FIGURE, 10**6) == 8
    assert adapted_divisor(4, LoadClass.NORMAL, AdaptPolarity.PAPER, 10**6) == 4


def test_adapted_divisor_clamps():
    assert adapted_divisor(1, LoadClass.HIGH, AdaptPolarity.PAPER, 100) == 1
    assert adapted_divisor(80, LoadClass.LOW, AdaptPolarity.PAPER, 100) == 100
    assert adapted_divisor(1, LoadClass.LOW, AdaptPolarity.PAPER, 1) == 1


def test_adapt_chunk_updates_state_and_tallies():
    w = WorkerState(0, 0, 100, d=4)
    adapt_chunk(w, LoadClass.LOW, AdaptPolarity.PAPER, 100)
    assert w.d == 8
    adapt_chunk(w, LoadClass.NORMAL, AdaptPolarity.PAPER, 100)
    assert w.d == 8
    adapt_chunk(w, LoadClass.HIGH, AdaptPolarity.PAPER, 100)
    assert w.d == 4
    assert w.adapt_events[LoadClass.LOW] == 1
    assert w.adapt_events[LoadClass.NORMAL] == 1
    assert w.adapt_events[LoadClass.HIGH] == 1


# ---------------------------------------------------------- claim / steal ----


def test_try_local_work_fast_path():
    w = WorkerState(0, 0, 100)
    assert try_local_work(w, 30) == (0, 30)
    assert w.begin == 30


def test_try_local_work_clamps_tail():
    w = WorkerState(0, 95, 100)
    assert try_local_work(w, 30) == (95, 100)
    assert w.begin == 100


def test_try_local_work_empty():
    w = WorkerState(0, 100, 100)
    assert try_local_work(w, 5) is None
    assert w.begin == 100


def test_try_local_work_rejects_bad_chunk():
    with pytest.raises(ValueError):
        try_local_work(WorkerState(0, 0, 10), 0)


def test_steal_takes_upper_half():
    thief = WorkerState(1, 0, 0)
    victim = WorkerState(0, 10, 50)
    stolen = steal(thief, victim, average_stats=False)
    assert stolen == (30, 50)
    assert victim.end == 30 and victim.begin == 10
    assert (thief.begin, thief.end) == (30, 50)


def test_steal_averages_thief_stats_only():
    thief = WorkerState(1, 0, 0, d=4)
    thief.k = 100
    victim = WorkerState(0, 10, 50, d=8)
    victim.k = 200
    steal(thief, victim, average_stats=True)
    assert thief.d == 6 and thief.k == 150
    assert victim.d == 8 and victim.k == 200  # victim untouched


def test_steal_without_averaging_keeps_thief_stats():
    thief = WorkerState(1, 0, 0, d=4)
    thief.k = 7
    victim = WorkerState(0, 0, 40, d=16)
    victim.k = 900
    steal(thief, victim, average_stats=False)
    assert thief.d == 4 and thief.k == 7


def test_steal_leaves_single_iteration_victims_alone():
    thief = WorkerState(1, 0, 0)
    victim = WorkerState(0, 49, 50)
    assert steal(thief, victim) is None
    assert (victim.begin, victim.end) == (49, 50)


def test_steal_empty_victim():
    assert steal(WorkerState(1, 0, 0), WorkerState(0, 5, 5)) is None


def test_steal_odd_remainder_leaves_majority():
    victim = WorkerState(0, 0, 5)
    stolen = steal(WorkerState(1, 0, 0), victim)
    assert stolen == (3, 5)  # floor(5/2) = 2 taken, 3 left
    assert victim.end == 3


def test_select_victim_never_self_and_covers_all():
    rng = Random(7)
    seen = set()
    for _ in range(400):
        v = select_victim(2, 5, rng)
        assert v != 2 and 0 <= v < 5
        seen.add(v)
    assert seen == {0, 1, 3, 4}
    with pytest.raises(ValueError):
        select_victim(0, 1, rng)


# ------------------------------------------------------- shared cursors ----


def test_dynamic_next_sequence():
    cursor = SharedCursor()
    got = []
    while (r := dynamic_next(cursor, 3, 10)) is not None:
        got.append((r.begin, r.end))
    assert got == [(0, 3), (3, 6), (6, 9), (9, 10)]


def test_guided_next_examples():
    cursor = SharedCursor()
    r = guided_next(cursor, 1, 1000, 4)
    assert r == (0, 250)
    cursor = SharedCursor()
    cursor.position = 997  # remaining 3, p=4: floor is the min_chunk
    assert guided_next(cursor, 2, 1000, 4) == (997, 999)
    assert guided_next(cursor, 2, 1000, 4) == (999, 1000)  # clamped to tail
    assert guided_next(cursor, 2, 1000, 4) is None


def test_guided_grants_decay_without_interleaving():
    cursor = SharedCursor()
    grants = []
    while (r := guided_next(cursor, 1, 10_000, 4)) is not None:
        grants.append(r.length)
    assert all(a >= b for a, b in zip(grants, grants[1:]))
    assert sum(grants) == 10_000


# ------------------------------------------------------------- the engine ----


def _record_ranges(n, policy, p, seed=0):
    per_worker = [[] for _ in range(p)]

    def body(begin, end, worker_id):
        per_worker[worker_id].append((begin, end))

    report = parallel_for(n, body, policy, p, seed=seed, range_body=True)
    return per_worker, report


def _coverage_counts(per_worker, n):
    counts = np.zeros(n, dtype=np.int64)
    for ranges in per_worker:
        for b, e in ranges:
            counts[b:e] += 1
    return counts


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.name)
@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_exactly_once_smoke(policy, p):
    n = 500
    per_worker, report = _record_ranges(n, policy, p, seed=11)
    counts = _coverage_counts(per_worker, n)
    assert np.all(counts == 1)
    assert report.total_completed == n


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.name)
def test_indexed_body_and_empty_loop(policy):
    seen = []
    report = parallel_for(0, seen.append, policy, 4)
    assert seen == [] and report.total_completed == 0
    report = parallel_for(7, seen.append, policy, 2, seed=3)
    assert sorted(seen) == list(range(7))


def test_single_worker_runs_inline(monkeypatch):
    def no_threads(*args, **kwargs):
        raise AssertionError("p=1 must not spawn threads")

    monkeypatch.setattr(threading, "Thread", no_threads)
    out = []
    parallel_for(20, out.append, Ich(0.25), 1)
    assert sorted(out) == list(range(20))


def test_ich_single_worker_takes_one_chunk():
    per_worker, report = _record_ranges(64, Ich(0.25), 1)
    # d starts at min(p, n) = 1, so the whole queue goes in one claim.
    assert per_worker[0] == [(0, 64)]
    assert report.workers[0].d == 1


def test_ich_first_chunks_follow_divisor():
    per_worker, _ = _record_ranges(27, Ich(0.25), 3, seed=5)
    for ranges in per_worker:
        if ranges:
            b, e = ranges[0]
            assert e - b == 3  # ceil(27/3)=9 per queue, d=3 -> chunk 3
            break


def test_static_is_one_block_per_worker():
    per_worker, report = _record_ranges(100, Static(), 4)
    assert [len(r) for r in per_worker] == [1, 1, 1, 1]
    assert per_worker[0] == [(0, 25)]
    assert all(w.completed == 25 for w in report.workers)


def test_dynamic_chunks_have_fixed_size():
    per_worker, _ = _record_ranges(100, Dynamic(7), 4, seed=1)
    lengths = [e - b for ranges in per_worker for (b, e) in ranges]
    assert sorted(set(lengths), reverse=True)[0] == 7
    assert lengths.count(7) == 14  # 14 full chunks + short tail of 2
    assert sum(lengths) == 100


def test_stealing_engine_reports_steals_on_imbalance():
    # Worker 0 owns a slow head; others finish instantly and must steal.
    import time as _time

    def body(begin, end, worker_id):
        for i in range(begin, end):
            if i < 40:
                _time.sleep(0.0004)

    report = parallel_for(160, body, Stealing(1), 4, seed=9, range_body=True)
    assert report.total_completed == 160
    assert report.total_steals > 0


def test_ich_engine_adapts_under_imbalance():
    import time as _time

    def body(begin, end, worker_id):
        for i in range(begin, end):
            if i < 50:
                _time.sleep(0.0003)

    report = parallel_for(400, body, Ich(0.25), 4, seed=2, range_body=True)
    assert report.total_completed == 400
    assert report.total_adapt_events > 0
    assert all(w.d >= 1 for w in report.workers)


def test_worker_report_k_matches_completed_without_steals():
    _, report = _record_ranges(120, Dynamic(5), 4, seed=0)
    for w in report.workers:
        assert w.k == w.completed


def test_body_exception_propagates():
    class Boom(RuntimeError):
        pass

    def body(i):
        if i == 33:
            raise Boom("iteration 33")

    for policy in ALL_POLICIES:
        with pytest.raises(Boom):
            parallel_for(200, body, policy, 4, seed=1)


def test_engine_rejects_bad_arguments():
    with pytest.raises(ValueError):
        parallel_for(-1, lambda i: None, Static(), 2)
    with pytest.raises(ValueError):
        parallel_for(10, lambda i: None, Static(), 0)
    with pytest.raises(TypeError):
        parallel_for(10, None, Static(), 2)
    with pytest.raises(TypeError):
        parallel_for(10, lambda i: None, "guided", 2)


def test_pinning_toggle_smoke():
    out = []
    report = parallel_for(50, out.append, Dynamic(5), 2, seed=0, pin=True)
    assert sorted(out) == list(range(50))
    assert report.p == 2


def test_concurrent_owner_thief_exactly_once_small_loops():
    # Tight loops with tiny chunks maximize owner/thief collisions.
    for seed in range(6):
        n = 64
        counts = np.zeros(n, dtype=np.int64)
        lists = [[] for _ in range(3)]

        def body(b, e, wid):
            lists[wid].append((b, e))

        parallel_for(n, body, Stealing(1), 3, seed=seed, range_body=True)
        for ranges in lists:
            for b, e in ranges:
                counts[b:e] += 1
        assert np.all(counts == 1), f"seed {seed}: {counts}"
