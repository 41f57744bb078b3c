"""Out-of-order multi-bus/multi-chip flash controller.

Requests are split into phases (see :mod:`rtnand.timing`). A chip serves one
request at a time, from its command phase to its last phase; bus phases of
requests on different chips interleave on the shared bus. Among ready bus
phases the oldest request wins, so a younger request can overtake an older
one that is stuck behind a busy chip.

Hazards: a request waits for every earlier incomplete request on the same
page, or on the same block when either side is an erase.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from enum import IntEnum
from heapq import heappop, heappush
from typing import Any, Callable

from .edf import Direction, EdfExecutor, TaskDone, TransferTask
from .faults import FaultEngine, PreconditionViolated
from .flash_array import FlashArray, Geometry, PageAddress, PageState
from .sim_core import Event, EventKind, EventLoop
from .timing import OpKind, Phase, PhaseKind, Resource, TimingModel

ARRIVAL = EventKind.REQUEST_ARRIVAL
ACK = EventKind.ACK_DEPARTURE
QUEUE_MOVE = EventKind.QUEUE_MOVE
PHASE_START = EventKind.PHASE_START
PHASE_END = EventKind.PHASE_END
TRANSFER_COMPLETE = EventKind.TRANSFER_COMPLETE

BUS = Resource.BUS
CMD_ADDR = PhaseKind.CMD_ADDR
ARRAY_BUSY = PhaseKind.ARRAY_BUSY
STATUS_CHECK = PhaseKind.STATUS_CHECK
DATA_IN = PhaseKind.DATA_IN
DATA_OUT = PhaseKind.DATA_OUT
READ, PROGRAM, ERASE = OpKind.READ, OpKind.PROGRAM, OpKind.ERASE


class RequestStatus(IntEnum):
    PENDING = 0
    OK = 1
    FAIL = 2
    DROPPED = 3


class ControllerError(Exception):
    pass


class QueueFull(ControllerError):
    pass


class BadPayload(ControllerError, ValueError):
    pass


def derive_rng(seed: int, *parts: Any) -> random.Random:
    """Independent, platform-stable RNG stream for ``(seed, *parts)``."""
    return random.Random(":".join(map(str, (seed, *parts))))


@dataclass(eq=False, slots=True)
class FlashRequest:
    id: int
    kind: OpKind
    addr: PageAddress
    data: bytes | None = None
    t_issue: int = 0
    t_complete_sim: int | None = None
    status: RequestStatus = RequestStatus.PENDING
    plan: list[Phase] = field(default_factory=list)
    internal_fault: bool = False
    phase_idx: int = 0
    arrival_seq: int = -1
    blocked: bool = False
    array_started: bool = False
    resolved: bool = False
    task: TransferTask | None = None
    staged: bytes | None = None
    # Read result: (bytes, PageState) as copied out by the executor.
    result: tuple[bytes, PageState] | None = None


@dataclass(frozen=True)
class ControllerConfig:
    queue_depth: int = 256

    def __post_init__(self):
        if self.queue_depth < 1:
            raise ValueError("queue_depth must be >= 1")


class Controller:
    def __init__(self, loop: EventLoop, array: FlashArray, timing: TimingModel, faults: FaultEngine,
                 executor: EdfExecutor, *, seed: int = 0, epoch: int = 0,
                 config: ControllerConfig | None = None):
        self.loop = loop
        self.array = array
        self.geometry: Geometry = array.geometry
        self.timing = timing
        self.faults = faults
        self.executor = executor
        self.seed = seed
        self.epoch = epoch
        self.config = config or ControllerConfig()
        g = self.geometry
        n_chips = g.n_chips
        self.bus_busy = [False] * g.buses
        self.bus_ready: list[list] = [[] for _ in range(g.buses)]
        self.chip_holder: list[FlashRequest | None] = [None] * n_chips
        self.chip_queue: list[list] = [[] for _ in range(n_chips)]
        self.block_reqs: dict[tuple[int, int, int], list[FlashRequest]] = {}
        self.outstanding: dict[int, FlashRequest] = {}
        self._plan_rngs = [derive_rng(seed, "plan", epoch, c) for c in range(n_chips)]
        self._arrivals = itertools.count()
        self._task_ids = itertools.count()
        self._auto_ids = itertools.count()
        self.ack_listeners: list[Callable[[FlashRequest], None]] = []
        self.stats = {"acked": 0, "fail": 0, "internal_faults": 0, "illegal_programs": 0}
        loop.on(ARRIVAL, self._on_arrival)
        loop.on(QUEUE_MOVE, self._on_queue_move)
        loop.on(PHASE_START, self._on_phase_start)
        loop.on(PHASE_END, self._on_phase_end)
        loop.on(TRANSFER_COMPLETE, self._on_transfer_complete)
        loop.on(ACK, self._on_ack)

    # -- submission ------------------------------------------------------------

    def _chip(self, addr: PageAddress) -> int:
        return addr[0] * self.geometry.chips_per_bus + addr[1]

    def submit(self, kind: OpKind, addr: PageAddress, data: bytes | None = None,
               t_issue: int | None = None, request_id: int | None = None) -> FlashRequest:
        kind = OpKind(kind)
        addr = PageAddress(*addr)
        self.geometry.check(addr)
        if kind == PROGRAM:
            if data is None or len(data) != self.geometry.page_size_bytes:
                raise BadPayload(f"program needs exactly {self.geometry.page_size_bytes} bytes")
        elif data is not None:
            raise BadPayload(f"{kind.name.lower()} takes no payload")
        if len(self.outstanding) >= self.config.queue_depth:
            raise QueueFull(f"{len(self.outstanding)} requests outstanding")
        now = self.loop.now()
        if t_issue is None:
            t_issue = now
        rid = next(self._auto_ids) if request_id is None else request_id
        if rid in self.outstanding:
            raise ControllerError(f"request id {rid} already outstanding")
        rng = self._plan_rngs[self._chip(addr)]
        req = FlashRequest(rid, kind, addr, data, t_issue)
        req.plan = self.timing.phase_plan(kind, addr[3], rng, rid)
        if kind != READ:
            # Decided now, revealed at the status check.
            req.internal_fault = self.faults.roll_internal_fault(kind, rng)
        self.outstanding[rid] = req
        self.loop.schedule(max(now, t_issue), ARRIVAL, req)
        return req

    # -- hazards ---------------------------------------------------------------

    def hazard_check(self, req: FlashRequest) -> bool:
        """True when no earlier incomplete request conflicts with ``req``."""
        lst = self.block_reqs.get(req.addr.block_key)
        if not lst:
            return True
        erase = req.kind == ERASE
        page = req.addr[3]
        for other in lst:
            if other is req:
                break
            if erase or other.kind == ERASE or other.addr[3] == page:
                return False
        return True

    # -- arbitration -----------------------------------------------------------

    def select_next_phase(self, bus: int) -> FlashRequest | None:
        """Oldest request with a ready phase waiting for ``bus`` (without issuing it)."""
        heap = self.bus_ready[bus]
        return heap[0][1] if heap else None

    def _admit(self, chip: int, t: int) -> None:
        heap = self.chip_queue[chip]
        if heap and self.chip_holder[chip] is None:
            req = heappop(heap)[1]
            self.chip_holder[chip] = req
            req.phase_idx = 0
            self._phase_ready(req, t)

    def _phase_ready(self, req: FlashRequest, t: int) -> None:
        if req.plan[req.phase_idx].resource == BUS:
            bus = req.addr[0]
            heappush(self.bus_ready[bus], (req.arrival_seq, req))
            self._dispatch_bus(bus, t)
        else:
            self.loop.schedule(t, PHASE_START, (req, req.phase_idx))

    def _dispatch_bus(self, bus: int, t: int) -> None:
        if not self.bus_busy[bus]:
            heap = self.bus_ready[bus]
            if heap:
                req = heappop(heap)[1]
                self.bus_busy[bus] = True
                self.loop.schedule(t, PHASE_START, (req, req.phase_idx))

    # -- event handlers --------------------------------------------------------

    def _on_arrival(self, ev: Event) -> None:
        req = ev.payload
        req.arrival_seq = next(self._arrivals)
        key = req.addr.block_key
        lst = self.block_reqs.get(key)
        if lst is None:
            self.block_reqs[key] = [req]
            self.loop.schedule(ev.time, QUEUE_MOVE, req)
            return
        lst.append(req)
        if self.hazard_check(req):
            self.loop.schedule(ev.time, QUEUE_MOVE, req)
        else:
            req.blocked = True

    def _on_queue_move(self, ev: Event) -> None:
        req = ev.payload
        chip = self._chip(req.addr)
        heappush(self.chip_queue[chip], (req.arrival_seq, req))
        self._admit(chip, ev.time)

    def _on_phase_start(self, ev: Event) -> None:
        req, idx = ev.payload
        phase = req.plan[idx]
        t = ev.time
        end = t + phase.duration
        kind = phase.kind
        if kind == DATA_IN or kind == DATA_OUT:
            task = req.task
            if task.deadline != end:
                try:
                    self.executor.update_deadline(task.task_id, end)
                except TaskDone:
                    pass  # copied ahead of its slot; the source cannot change while queued
            task.sealed = True
            self.loop.schedule(end, TRANSFER_COMPLETE, (req, idx))
            return
        if kind == ARRAY_BUSY:
            req.array_started = True
        self.loop.schedule(end, PHASE_END, (req, idx))

    def _on_phase_end(self, ev: Event) -> None:
        req, idx = ev.payload
        self._phase_done(req, idx, ev.time)

    def _on_transfer_complete(self, ev: Event) -> None:
        req, idx = ev.payload
        task = req.task
        self.executor.wait_done(task)
        if task.direction == Direction.DATA_IN:
            req.staged = task.result
        else:
            req.result = task.result
        self.executor.forget(task.task_id)
        req.task = None
        self._phase_done(req, idx, ev.time)

    def _enqueue_transfer(self, req: FlashRequest, direction: Direction, t: int) -> None:
        task = TransferTask(next(self._task_ids), direction, req.addr, t + self.timing.page_transfer_ns,
                            request=req, payload=req.data)
        req.task = task
        self.executor.enqueue_transfer(task)

    def _phase_done(self, req: FlashRequest, idx: int, t: int) -> None:
        phase = req.plan[idx]
        on_bus = phase.resource == BUS
        bus = req.addr[0]
        if on_bus:
            self.bus_busy[bus] = False
        kind = phase.kind
        if kind == ARRAY_BUSY:
            if req.kind == READ:
                self._enqueue_transfer(req, Direction.DATA_OUT, t)
        elif kind == CMD_ADDR:
            if req.kind == PROGRAM:
                self._enqueue_transfer(req, Direction.DATA_IN, t)
        elif kind == STATUS_CHECK:
            self._resolve(req)
        elif kind == DATA_OUT:
            req.status = RequestStatus.OK
        req.phase_idx = idx + 1
        if req.phase_idx == len(req.plan):
            chip = self._chip(req.addr)
            self.chip_holder[chip] = None
            self.loop.schedule(t, ACK, req)
            self._admit(chip, t)
        else:
            self._phase_ready(req, t)
        if on_bus:
            self._dispatch_bus(bus, t)

    def outcome_rng(self, req: FlashRequest) -> random.Random:
        # Keyed by request, so outcomes do not depend on how requests interleave.
        return derive_rng(self.seed, "outcome", self.epoch, req.id)

    def _resolve(self, req: FlashRequest) -> None:
        req.resolved = True
        fault = req.internal_fault
        if fault:
            self.stats["internal_faults"] += 1
        if req.kind == PROGRAM:
            rng = self.outcome_rng(req) if fault else None
            try:
                self.faults.apply_program_outcome(req.addr, req.staged, fault, False, rng)
            except PreconditionViolated:
                self._illegal_program(req)
                return
        else:
            self.faults.apply_erase_outcome(req.addr, fault, False, self.outcome_rng(req) if fault else None)
        req.status = RequestStatus.FAIL if fault else RequestStatus.OK

    def _illegal_program(self, req: FlashRequest) -> None:
        # Program to a page that is not ErasedProgrammable: the chip reports
        # failure. An ErasedNotProgrammable page keeps its state; a programmed
        # page ends up with invalid contents.
        self.stats["illegal_programs"] += 1
        req.status = RequestStatus.FAIL
        if self.array.page_state(req.addr) != PageState.ERASED_NOT_PROGRAMMABLE:
            bad = self.faults.corrupt(req.staged, self.outcome_rng(req))
            self.array.set_state(req.addr, PageState.PROGRAMMED_DATA_NOT_OK, bad)

    def _on_ack(self, ev: Event) -> None:
        req = ev.payload
        req.t_complete_sim = ev.time
        del self.outstanding[req.id]
        self.stats["acked"] += 1
        if req.status == RequestStatus.FAIL:
            self.stats["fail"] += 1
        key = req.addr.block_key
        lst = self.block_reqs[key]
        lst.remove(req)
        if lst:
            for other in lst:
                if other.blocked and self.hazard_check(other):
                    other.blocked = False
                    self.loop.schedule(ev.time, QUEUE_MOVE, other)
        else:
            del self.block_reqs[key]
        for cb in self.ack_listeners:
            cb(req)

    # -- power failure ---------------------------------------------------------

    def power_fail(self) -> list[FlashRequest]:
        """Resolve in-flight array operations as interrupted; drop every unacked request."""
        faults = self.faults
        dropped = []
        for req in self.outstanding.values():
            if req.array_started and not req.resolved and req.kind != READ:
                rng = self.outcome_rng(req)
                if req.kind == PROGRAM:
                    if self.array.page_state(req.addr) == PageState.ERASED_PROGRAMMABLE:
                        faults.apply_program_outcome(req.addr, req.staged, False, True, rng)
                else:
                    faults.apply_erase_outcome(req.addr, False, True, rng)
                req.resolved = True
            req.status = RequestStatus.DROPPED
            dropped.append(req)
        self.outstanding.clear()
        return dropped
