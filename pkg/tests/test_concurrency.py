"""Tests for bounded parallel execution."""
import threading

from utils.concurrency import gather_limited, run_parallel


async def test_gather_limited_keeps_order():
    """Results come back in submission order."""
    calls = [(lambda k=k: k * k) for k in range(6)]

    results = await gather_limited(calls, jobs=3)

    assert results == [0, 1, 4, 9, 16, 25]


async def test_gather_limited_bounds_workers():
    """No more than ``jobs`` calls run at the same time."""
    lock = threading.Lock()
    state = {"running": 0, "peak": 0}

    def call():
        with lock:
            state["running"] += 1
            state["peak"] = max(state["peak"], state["running"])
        threading.Event().wait(0.01)
        with lock:
            state["running"] -= 1
        return True

    await gather_limited([call] * 8, jobs=2)

    assert state["peak"] <= 2


def test_run_parallel_sequential():
    """With one job the calls run in order on the calling thread."""
    seen = []
    calls = [(lambda k=k: seen.append((k, threading.get_ident())) or k) for k in range(3)]

    results = run_parallel(calls, jobs=1)

    assert results == [0, 1, 2]
    assert [k for k, _ in seen] == [0, 1, 2]
    assert {t for _, t in seen} == {threading.get_ident()}


def test_run_parallel_threads():
    """With several jobs results still follow submission order."""
    results = run_parallel([(lambda k=k: k + 1) for k in range(5)], jobs=2)

    assert results == [1, 2, 3, 4, 5]
