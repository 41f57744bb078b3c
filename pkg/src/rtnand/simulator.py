"""The assembled NAND simulator in virtual-time (VT) or real-time (RT) mode.

VT mode is a pure discrete-event run: deterministic, as fast as the host
allows, and the reference for every timing check. RT mode runs the same
event loop, but copies are performed by a dedicated executor thread and
acknowledgements are released by the timing aligner thread at the wall-clock
instant matching their simulated completion time.
"""

from __future__ import annotations

import gc
import sys
import threading
import time
from enum import Enum
from typing import Callable

from .affinity import pin_current_thread
from .config import SimConfig
from .controller import Controller, FlashRequest, RequestStatus
from .edf import EdfExecutor, TransferTask
from .faults import FaultEngine
from .flash_array import FlashArray, PageAddress
from .rt_align import ReleaseRecord, TimingAligner
from .sim_core import Event, EventKind, EventLoop
from .timing import OpKind, TimingModel


class Mode(str, Enum):
    VT = "vt"
    RT = "rt"


class EngineHalted(RuntimeError):
    pass


class NotHalted(RuntimeError):
    pass


def format_event(ev: Event) -> str:
    payload = ev.payload
    if isinstance(payload, tuple):
        req, idx = payload
        return f"{ev.time} {ev.seq} {EventKind(ev.kind).name} {req.id} {req.plan[idx].kind.name}"
    rid = "-" if payload is None else payload.id
    return f"{ev.time} {ev.seq} {EventKind(ev.kind).name} {rid} -"


class Simulator:
    def __init__(self, config: SimConfig | None = None, *, mode: Mode | str = Mode.VT,
                 seed: int | None = None, array: FlashArray | None = None,
                 record_events: bool = False,
                 executor_hook: Callable[[TransferTask], None] | None = None,
                 deliver: Callable[[ReleaseRecord], None] | None = None):
        self.config = config or SimConfig()
        self.mode = Mode(mode)
        self.seed = self.config.fault.rng_seed if seed is None else seed
        self.array = array or FlashArray(self.config.geometry)
        if self.array.geometry != self.config.geometry:
            raise ValueError("array geometry does not match the configuration")
        self.faults = FaultEngine(self.config.fault, self.array)
        self.timing = TimingModel(self.config.timing, self.config.geometry.page_size_bytes)
        self.record_events = record_events
        self.executor_hook = executor_hook
        self.deliver = deliver
        self.ack_listeners: list[Callable[[FlashRequest], None]] = []
        self.pf_listeners: list[Callable[[list[FlashRequest]], None]] = []
        self.epoch = 0
        self.halted = False
        self.running = False
        self.event_logs: list[list[Event]] = []
        self.aligners: list[TimingAligner] = []
        self.executors: list[EdfExecutor] = []
        self._old_switch: float | None = None
        self._build_epoch()

    @property
    def rt(self) -> bool:
        return self.mode == Mode.RT

    def _build_epoch(self) -> None:
        cfg = self.config
        self.loop = EventLoop()
        if self.record_events:
            self.loop.log = []
            self.event_logs.append(self.loop.log)
        self.executor = EdfExecutor(self.array, threaded=self.rt,
                                    busy_poll=self.rt and not cfg.realtime.hybrid,
                                    on_execute=self.executor_hook)
        self.executors.append(self.executor)
        self.controller = Controller(self.loop, self.array, self.timing, self.faults, self.executor,
                                     seed=self.seed, epoch=self.epoch, config=cfg.controller)
        self.controller.ack_listeners.append(self._ack)
        self.loop.on(EventKind.POWER_FAILURE, self._on_power_failure)
        self.aligner = None
        if self.rt:
            rt = cfg.realtime
            self.aligner = TimingAligner(hybrid=rt.hybrid, sleep_margin_ns=rt.sleep_margin_ns,
                                         calibration_ns=rt.calibration_ns, deliver=self.deliver,
                                         overrun_tolerance_ns=rt.overrun_tolerance_ns)
            self.aligners.append(self.aligner)
            self.loop.external_sink = self._to_aligner

    def _to_aligner(self, ev: Event) -> None:
        self.aligner.submit(ev.payload.id, ev.time)

    def _ack(self, req: FlashRequest) -> None:
        for cb in self.ack_listeners:
            cb(req)

    # -- host interface ----------------------------------------------------

    def now(self) -> int:
        return self.loop.now()

    def submit(self, kind: OpKind, addr: PageAddress, data: bytes | None = None,
               t_issue: int | None = None, request_id: int | None = None) -> FlashRequest:
        if self.halted:
            raise EngineHalted("power failure: reboot before submitting")
        return self.controller.submit(kind, addr, data, t_issue, request_id)

    def post_submit(self, kind: OpKind, addr: PageAddress, data: bytes | None = None,
                    on_submitted: Callable[[FlashRequest], None] | None = None) -> None:
        """Thread-safe live submission, stamped with the simulator's clock on receipt."""

        def _do():
            req = self.submit(kind, addr, data, t_issue=self._live_now())
            if on_submitted is not None:
                on_submitted(req)

        self.loop.post(_do)

    def _live_now(self) -> int:
        now = self.loop.now()
        if self.rt and self.aligner.wall is not None:
            wall = self.aligner.wall
            return max(now, int(wall.to_ns(self.aligner.clock())))
        return now

    def schedule_power_failure(self, t: int) -> int:
        return self.loop.schedule(t, EventKind.POWER_FAILURE)

    # -- running -----------------------------------------------------------

    def start(self) -> None:
        """RT only: start the executor and aligner threads and anchor wall time."""
        if self.running:
            return
        self.running = True
        if self.rt:
            if self._old_switch is None:
                self._old_switch = sys.getswitchinterval()
                sys.setswitchinterval(self.config.realtime.switch_interval_us * 1e-6)
            pin_current_thread("loop")
            self.executor.start()
            self.aligner.start()

    def run(self, limit: int | None = None) -> int:
        self.start()
        # The loop allocates an event tuple per step; a cyclic collection then
        # rescans the whole host heap. Events are acyclic, so pause it.
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            return self.loop.run_until(limit)
        finally:
            if was_enabled:
                gc.enable()

    def serve(self, stop: threading.Event, runahead_ns: int = 1_000_000, poll_s: float = 50e-6) -> int:
        """Live mode: process events no further than ``runahead_ns`` past wall time until ``stop``."""
        self.start()
        n = 0
        loop = self.loop
        while not stop.is_set() or len(loop.queue):
            loop.drain_inbound()
            head = loop.queue.peek()
            horizon = self._live_now() + runahead_ns if self.rt else None
            if head is None or (horizon is not None and head.time > horizon):
                if stop.is_set() and head is None:
                    break
                time.sleep(poll_s)
                continue
            loop.run_step()
            n += 1
        return n

    def close(self) -> None:
        """Release every pending acknowledgement and stop worker threads."""
        if self.rt:
            self.aligner.close()
            self.executor.stop()
            if self._old_switch is not None:
                sys.setswitchinterval(self._old_switch)
                self._old_switch = None
        self.running = False

    # -- power failure -----------------------------------------------------

    def _on_power_failure(self, ev: Event) -> None:
        self.executor.clear()
        dropped = self.controller.power_fail()
        self.loop.queue.clear()
        self.halted = True
        for cb in self.pf_listeners:
            cb(dropped)

    def reboot(self) -> None:
        """Reset volatile state after a power failure; flash contents survive."""
        if not self.halted:
            raise NotHalted("reboot is only valid after a power failure")
        if self.rt:
            # Acks completed before the failure still go out at their instants.
            self.aligner.close()
            self.executor.stop()
        self.running = False
        self.epoch += 1
        self.halted = False
        self._build_epoch()

    @property
    def event_log(self) -> list[Event]:
        return self.loop.log or []

    def event_log_lines(self) -> list[str]:
        out = []
        for i, log in enumerate(self.event_logs):
            out.extend(f"{i} {format_event(ev)}" for ev in log)
        return out


__all__ = ["Simulator", "Mode", "EngineHalted", "NotHalted", "RequestStatus", "format_event"]
