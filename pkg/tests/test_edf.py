import itertools
import random
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtnand.edf import (AlreadyRunning, Direction, DuplicateTask, EdfExecutor, TaskDone, TaskState,
                        TransferTask, UnknownTask)
from rtnand.flash_array import FlashArray, PageAddress

from conftest import SMALL, pattern
from edf_oracle import build_ops, executor_order, oracle_order

A = PageAddress(0, 0, 0, 0)


def task(tid, deadline, direction=Direction.DATA_IN, payload=b"x" * 4096, addr=A):
    return TransferTask(tid, direction, addr, deadline, payload=payload)


@pytest.fixture
def ex():
    return EdfExecutor(FlashArray(SMALL))


def drain(ex):
    out = []
    while (t := ex.run_one()) is not None:
        out.append(t.task_id)
    return out


def test_single_task(ex):
    ex.enqueue_transfer(task(1, 10))
    assert ex.next_task().task_id == 1


def test_deadline_order(ex):
    for tid, d in ((1, 300), (2, 100), (3, 200)):
        ex.enqueue_transfer(task(tid, d))
    assert drain(ex) == [2, 3, 1]


def test_equal_deadlines_fifo(ex):
    for tid in (5, 3, 9):
        ex.enqueue_transfer(task(tid, 100))
    assert drain(ex) == [5, 3, 9]


def test_update_reorders_queued(ex):
    ex.enqueue_transfer(task(1, 100))
    ex.enqueue_transfer(task(2, 80))
    ex.update_deadline(1, 50)
    assert drain(ex) == [1, 2]


def test_running_task_is_not_preempted(ex):
    ex.enqueue_transfer(task(1, 200))
    running = ex.next_task()
    ex.enqueue_transfer(task(2, 150))
    with pytest.raises(AlreadyRunning):
        ex.next_task()
    ex.execute(running)
    ex.finish(running)
    assert ex.next_task().task_id == 2
    assert ex.dispatch_log == [1, 2]


def test_update_to_same_value_keeps_order(ex):
    ex.enqueue_transfer(task(1, 100))
    ex.enqueue_transfer(task(2, 100))
    ex.update_deadline(1, 100)
    assert drain(ex) == [1, 2]


def test_empty_queue(ex):
    assert ex.next_task() is None


def test_errors(ex):
    ex.enqueue_transfer(task(1, 10))
    with pytest.raises(DuplicateTask):
        ex.enqueue_transfer(task(1, 20))
    with pytest.raises(UnknownTask):
        ex.update_deadline(99, 5)
    ex.run_one()
    with pytest.raises(TaskDone):
        ex.update_deadline(1, 5)


def test_data_out_copies_page():
    arr = FlashArray(SMALL)
    arr.commit_program(A, pattern(3))
    ex = EdfExecutor(arr)
    t = task(1, 10, Direction.DATA_OUT, payload=None)
    ex.enqueue_transfer(t)
    ex.run_one()
    assert t.state == TaskState.DONE
    assert t.result[0] == pattern(3)


def test_wait_done_runs_earlier_deadlines_first(ex):
    ex.enqueue_transfer(task(1, 300))
    ex.enqueue_transfer(task(2, 100))
    target = ex.queue.get(1)
    ex.wait_done(target)
    assert ex.dispatch_log == [2, 1]


@pytest.mark.parametrize("seed", range(200))
def test_matches_bruteforce_oracle(seed):
    ops = build_ops(random.Random(seed))
    assert executor_order(ops) == oracle_order(ops)


@settings(max_examples=100, deadline=None)
@given(deadlines=st.lists(st.integers(0, 5), min_size=1, max_size=5))
def test_every_enqueue_order_dispatches_sorted(deadlines):
    # Exhaustive over enqueue interleavings for small sets.
    for perm in itertools.permutations(range(len(deadlines))):
        ex = EdfExecutor(FlashArray(SMALL))
        for tid in perm:
            ex.enqueue_transfer(task(tid, deadlines[tid]))
        got = drain(ex)
        assert got == sorted(perm, key=lambda t: (deadlines[t], perm.index(t)))


def test_threaded_worker_runs_tasks():
    ex = EdfExecutor(FlashArray(SMALL), threaded=True)
    ex.start()
    try:
        tasks = [task(i, 100 - i) for i in range(20)]
        for t in tasks:
            ex.enqueue_transfer(t)
        for t in tasks:
            ex.wait_done(t)
        assert all(t.state == TaskState.DONE for t in tasks)
    finally:
        ex.stop()


def test_threaded_non_preemption_under_slow_copy():
    started = threading.Event()

    def hook(t):
        if t.task_id == 1:
            started.set()
            time.sleep(0.02)

    ex = EdfExecutor(FlashArray(SMALL), threaded=True, on_execute=hook)
    ex.start()
    try:
        late = task(1, 500)
        ex.enqueue_transfer(late)
        started.wait(1)
        early = task(2, 10)
        ex.enqueue_transfer(early)
        ex.wait_done(early)
        assert ex.dispatch_log == [1, 2]
    finally:
        ex.stop()


def test_clear_waits_for_running_copy():
    release = threading.Event()
    ex = EdfExecutor(FlashArray(SMALL), threaded=True, on_execute=lambda t: release.wait(1))
    ex.start()
    try:
        t1 = task(1, 10)
        ex.enqueue_transfer(t1)
        ex.enqueue_transfer(task(2, 20))
        while ex.running is None:
            time.sleep(0.001)
        threading.Timer(0.01, release.set).start()
        dropped = ex.clear()
        assert [t.task_id for t in dropped] == [2]
        assert t1.state == TaskState.DONE
    finally:
        ex.stop()


def test_copy_time_stats(ex):
    for i in range(50):
        ex.enqueue_transfer(task(i, i))
    drain(ex)
    stats = ex.copy_time_stats(124_121)
    assert stats["count"] == 50
    assert stats["p50_ns"] <= stats["p999_ns"] <= stats["max_ns"]
