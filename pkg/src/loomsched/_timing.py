"""Thread timing helpers: precise blocking sleeps and timer-slack tuning.

On Linux, a thread's default timer slack (~50 us) dominates the wakeup
latency of short sleeps.  Workers that realize work as blocking delays drop
the slack to 1 us via prctl(PR_SET_TIMERSLACK) so chunk-sized sleeps land
within a few microseconds of their deadline.  All helpers degrade to no-ops
on platforms without prctl.
"""

from __future__ import annotations

import ctypes
import time

_PR_SET_TIMERSLACK = 29
_PR_GET_TIMERSLACK = 30

try:
    _libc = ctypes.CDLL("libc.so.6", use_errno=True)
except OSError:  # pragma: no cover - non-glibc platform
    _libc = None

DEFAULT_SLACK_NS = 1_000


def set_timer_slack_ns(ns: int = DEFAULT_SLACK_NS) -> bool:
    """Set the calling thread's timer slack; returns True when applied."""
    if _libc is None:
        return False
    try:
        return _libc.prctl(_PR_SET_TIMERSLACK, ctypes.c_ulong(ns), 0, 0, 0) == 0
    except Exception:  # pragma: no cover - defensive
        return False


def get_timer_slack_ns() -> int | None:
    """Current thread's timer slack in ns, or None when unavailable."""
    if _libc is None:
        return None
    try:
        value = _libc.prctl(_PR_GET_TIMERSLACK, 0, 0, 0, 0)
    except Exception:  # pragma: no cover - defensive
        return None
    return None if value < 0 else value


def sleep_until_ns(deadline: int) -> None:
    """Block (never busy-wait) until time.perf_counter_ns() >= deadline."""
    while True:
        remaining = deadline - time.perf_counter_ns()
        if remaining <= 0:
            return
        time.sleep(remaining / 1e9)


def sleep_ns(ns: int) -> None:
    """Block for `ns` nanoseconds measured against perf_counter_ns."""
    if ns > 0:
        sleep_until_ns(time.perf_counter_ns() + ns)
