"""Discrete-event core: a (time, seq)-ordered queue and the main loop."""

from __future__ import annotations

import heapq
import queue
from enum import IntEnum
from typing import Any, Callable, NamedTuple


class EventKind(IntEnum):
    REQUEST_ARRIVAL = 0
    ACK_DEPARTURE = 1
    QUEUE_MOVE = 2
    PHASE_START = 3
    PHASE_END = 4
    TRANSFER_COMPLETE = 5
    POWER_FAILURE = 6


EXTERNALLY_VISIBLE = frozenset({EventKind.ACK_DEPARTURE})


class Event(NamedTuple):
    time: int
    seq: int
    kind: int
    payload: Any = None


class PastTimeError(ValueError):
    pass


class EventQueue:
    """Binary heap ordered by (time, seq); seq makes ties FIFO."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0

    def __len__(self):
        return len(self._heap)

    def push(self, time: int, kind: int, payload: Any = None) -> Event:
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def clear(self) -> None:
        self._heap.clear()


class EventLoop:
    """Single-threaded event loop.

    Handlers are registered per event kind. Cross-thread work (live
    submissions, power-failure triggers) goes through :meth:`post` and is
    drained between pops. Externally visible events are passed to
    ``external_sink`` once processed; the sink must not block.
    """

    def __init__(self):
        self.queue = EventQueue()
        self._now = 0
        self._handlers: list[Callable[[Event], None] | None] = [None] * len(EventKind)
        self._inbound: queue.SimpleQueue = queue.SimpleQueue()
        self.external_sink: Callable[[Event], None] | None = None
        self.log: list[Event] | None = None
        self.processed = 0

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def now(self) -> int:
        return self._now

    def schedule(self, time: int, kind: EventKind, payload: Any = None) -> int:
        """Insert an event; returns its seq (the event id)."""
        if time < self._now:
            raise PastTimeError(f"event at {time} is before now={self._now}")
        return self.queue.push(time, kind, payload).seq

    def post(self, fn: Callable[[], None]) -> None:
        """Thread-safe: run ``fn`` on the loop thread before the next pop."""
        self._inbound.put(fn)

    def drain_inbound(self) -> int:
        n = 0
        inbound = self._inbound
        while not inbound.empty():
            inbound.get_nowait()()
            n += 1
        return n

    def run_step(self) -> Event | None:
        if not self._inbound.empty():
            self.drain_inbound()
        q = self.queue
        if not len(q):
            return None
        ev = q.pop()
        self._now = ev.time
        if self.log is not None:
            self.log.append(ev)
        self.processed += 1
        handler = self._handlers[ev.kind]
        if handler is not None:
            handler(ev)
        if ev.kind == EventKind.ACK_DEPARTURE and self.external_sink is not None:
            self.external_sink(ev)
        return ev

    def run_until(self, limit: int | None = None) -> int:
        """Process events until the queue empties or the head is later than ``limit``."""
        # Same semantics as repeated run_step(), with the hot path kept local.
        n = 0
        heap = self.queue._heap
        inbound = self._inbound
        handlers = self._handlers
        pop = heapq.heappop
        ack = EventKind.ACK_DEPARTURE
        while True:
            if not inbound.empty():
                self.drain_inbound()
            if not heap:
                break
            ev = heap[0]
            if limit is not None and ev[0] > limit:
                break
            pop(heap)
            self._now = ev[0]
            if self.log is not None:
                self.log.append(ev)
            self.processed += 1
            n += 1
            handler = handlers[ev[2]]
            if handler is not None:
                handler(ev)
            if ev[2] == ack and self.external_sink is not None:
                self.external_sink(ev)
        return n

    def reset(self) -> None:
        """Drop all pending events and restart simulated time at 0."""
        self.queue = EventQueue()
        self._now = 0
        while not self._inbound.empty():
            self._inbound.get_nowait()
