"""Flash operation execution unit: bulk page copies in earliest-deadline-first order.

Deadlines are simulated completion times. A queued task may have its
deadline revised at any time; a running task's deadline can be updated but
its copy is never abandoned (non-preemptive EDF).
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable

from .affinity import pin_current_thread
from .flash_array import FlashArray, PageAddress


class Direction(IntEnum):
    DATA_IN = 0
    DATA_OUT = 1


class TaskState(IntEnum):
    QUEUED = 0
    RUNNING = 1
    DONE = 2


class ExecutorError(Exception):
    pass


class DuplicateTask(ExecutorError):
    pass


class UnknownTask(ExecutorError, KeyError):
    pass


class TaskDone(ExecutorError):
    pass


class AlreadyRunning(ExecutorError):
    pass


@dataclass(eq=False)
class TransferTask:
    task_id: int
    direction: Direction
    addr: PageAddress
    deadline: int
    request: Any = None
    enqueue_seq: int = -1
    state: TaskState = TaskState.QUEUED
    sealed: bool = False
    # DataIn: payload to stage; DataOut: filled with (bytes, PageState) by execute().
    payload: bytes | None = None
    result: Any = None
    copy_ns: int = 0

    @property
    def request_id(self) -> int | None:
        return getattr(self.request, "id", None)


class FlashWorkQueue:
    """Queued tasks keyed by (deadline, enqueue_seq), with lazy re-keying on update."""

    def __init__(self):
        self._heap: list[tuple[int, int, int]] = []
        self._tasks: dict[int, TransferTask] = {}
        self._seq = itertools.count()

    def __len__(self):
        return len(self._tasks)

    def __contains__(self, task_id: int) -> bool:
        return task_id in self._tasks

    def add(self, task: TransferTask) -> None:
        if task.task_id in self._tasks:
            raise DuplicateTask(task.task_id)
        task.enqueue_seq = next(self._seq)
        task.state = TaskState.QUEUED
        self._tasks[task.task_id] = task
        heapq.heappush(self._heap, (task.deadline, task.enqueue_seq, task.task_id))

    def rekey(self, task: TransferTask) -> None:
        heapq.heappush(self._heap, (task.deadline, task.enqueue_seq, task.task_id))

    def get(self, task_id: int) -> TransferTask | None:
        return self._tasks.get(task_id)

    def pop_min(self) -> TransferTask | None:
        heap, tasks = self._heap, self._tasks
        while heap:
            deadline, seq, tid = heapq.heappop(heap)
            task = tasks.get(tid)
            if task is not None and task.deadline == deadline and task.enqueue_seq == seq:
                del tasks[tid]
                return task
        return None

    def clear(self) -> list[TransferTask]:
        dropped = list(self._tasks.values())
        self._heap.clear()
        self._tasks.clear()
        return dropped


class EdfExecutor:
    """EDF copy engine.

    With ``threaded=False`` (virtual time) copies run inline when the event
    loop asks for a result via :meth:`wait_done`. With ``threaded=True`` a
    dedicated worker thread drains the queue as soon as tasks appear.
    """

    def __init__(self, array: FlashArray, *, threaded: bool = False, busy_poll: bool = False,
                 on_execute: Callable[[TransferTask], None] | None = None,
                 clock: Callable[[], int] = time.perf_counter_ns):
        self.array = array
        self.threaded = threaded
        self.busy_poll = busy_poll
        self.on_execute = on_execute
        self.clock = clock
        self.queue = FlashWorkQueue()
        self.running: TransferTask | None = None
        self._known: dict[int, TransferTask] = {}
        self._cond = threading.Condition()
        self._stop = False
        self._thread: threading.Thread | None = None
        self.dispatch_log: list[int] = []
        self.copy_times: list[tuple[int, int]] = []  # (task_id, copy ns)

    # -- queue operations ----------------------------------------------------

    def enqueue_transfer(self, task: TransferTask) -> None:
        with self._cond:
            if task.task_id in self._known:
                raise DuplicateTask(task.task_id)
            self.queue.add(task)
            self._known[task.task_id] = task
            self._cond.notify_all()

    def update_deadline(self, task_id: int, new_deadline: int) -> None:
        with self._cond:
            task = self._known.get(task_id)
            if task is None:
                raise UnknownTask(task_id)
            if task.state == TaskState.DONE:
                raise TaskDone(task_id)
            if task.deadline == new_deadline:
                return
            task.deadline = new_deadline
            if task.state == TaskState.QUEUED:
                self.queue.rekey(task)

    def next_task(self) -> TransferTask | None:
        with self._cond:
            if self.running is not None:
                raise AlreadyRunning(self.running.task_id)
            task = self.queue.pop_min()
            if task is None:
                return None
            task.state = TaskState.RUNNING
            self.running = task
            self.dispatch_log.append(task.task_id)
            return task

    def execute(self, task: TransferTask) -> None:
        if task.state != TaskState.RUNNING:
            raise ExecutorError(f"task {task.task_id} is not running")
        t0 = self.clock()
        if self.on_execute is not None:
            self.on_execute(task)
        if task.direction == Direction.DATA_IN:
            task.result = bytes(task.payload)
        else:
            task.result = self.array.read_page(task.addr)
        task.copy_ns = self.clock() - t0
        self.copy_times.append((task.task_id, task.copy_ns))

    def finish(self, task: TransferTask) -> None:
        with self._cond:
            task.state = TaskState.DONE
            self.running = None
            self._cond.notify_all()

    def forget(self, task_id: int) -> None:
        """Release bookkeeping for a finished task whose result has been consumed."""
        with self._cond:
            task = self._known.get(task_id)
            if task is not None and task.state == TaskState.DONE:
                del self._known[task_id]

    def run_one(self) -> TransferTask | None:
        task = self.next_task()
        if task is not None:
            self.execute(task)
            self.finish(task)
        return task

    def wait_done(self, task: TransferTask) -> None:
        """Block (or, unthreaded, execute inline in EDF order) until ``task`` is done."""
        if task.state == TaskState.DONE:
            return
        if not self.threaded:
            while task.state != TaskState.DONE:
                if self.run_one() is None:
                    raise ExecutorError(f"task {task.task_id} is not queued")
            return
        with self._cond:
            while task.state != TaskState.DONE:
                if task.task_id not in self._known:
                    raise ExecutorError(f"task {task.task_id} was dropped")
                self._cond.wait()

    def clear(self) -> list[TransferTask]:
        """Drop every queued task; waits for a running copy to finish (never abandoned)."""
        with self._cond:
            dropped = self.queue.clear()
            for t in dropped:
                self._known.pop(t.task_id, None)
            while self.running is not None:
                self._cond.wait()
            self._known.clear()
            return dropped

    # -- worker thread -------------------------------------------------------

    def start(self) -> None:
        if not self.threaded or self._thread is not None:
            return
        self._stop = False
        self._thread = threading.Thread(target=self._worker, name="edf-executor", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is None:
            return
        with self._cond:
            self._stop = True
            self._cond.notify_all()
        self._thread.join()
        self._thread = None

    def _worker(self) -> None:
        pin_current_thread("executor")
        cond = self._cond
        while True:
            if self.busy_poll:
                while not self._stop and not len(self.queue):
                    pass
            with cond:
                while not self._stop and not len(self.queue):
                    cond.wait()
                if self._stop:
                    return
                task = self.next_task()
            if task is None:
                continue
            self.execute(task)
            self.finish(task)

    def copy_time_stats(self, simulated_transfer_ns: int) -> dict[str, float]:
        """p50/p99.9/max copy time and the count exceeding 10% of the simulated transfer."""
        if not self.copy_times:
            return {"count": 0, "p50_ns": 0.0, "p999_ns": 0.0, "max_ns": 0.0, "over_budget": 0}
        import numpy as np

        ns = np.array([c for _, c in self.copy_times], dtype=np.int64)
        budget = 0.1 * simulated_transfer_ns
        return {
            "count": int(len(ns)),
            "p50_ns": float(np.percentile(ns, 50)),
            "p999_ns": float(np.percentile(ns, 99.9)),
            "max_ns": float(ns.max()),
            "over_budget": int((ns > budget).sum()),
        }
