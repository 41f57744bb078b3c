"""Timing alignment unit: release acknowledgements at their simulated completion instant.

Simulated nanoseconds are mapped onto a monotonic wall clock anchored at run
start. Each release spins on the clock until the target is reached; in hybrid
mode the thread first sleeps until ``sleep_margin_ns`` before the target.
"""

from __future__ import annotations

import queue
import statistics
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .affinity import pin_current_thread

_STOP = object()


class AlreadyAnchored(RuntimeError):
    pass


class NotAnchored(RuntimeError):
    pass


@dataclass(frozen=True)
class WallAnchor:
    epoch: int
    scale: float  # clock ticks per simulated nanosecond
    granularity: int = 1  # smallest observed clock increment, in ticks

    def to_wall(self, sim_ns: int) -> int:
        return self.epoch + round(sim_ns * self.scale)

    def to_ns(self, ticks: int) -> float:
        return (ticks - self.epoch) / self.scale


@dataclass(frozen=True)
class ReleaseRecord:
    request_id: int
    sim_completion: int
    wall_target: int
    wall_actual: int
    lateness_ns: int
    overrun: bool = False


@dataclass(frozen=True)
class LatenessReport:
    count: int = 0
    mean_pct: float = 0.0
    max_pct: float = 0.0
    overruns: int = 0
    mean_lateness_ns: float = 0.0
    p50_lateness_ns: float = 0.0
    p99_lateness_ns: float = 0.0
    max_lateness_ns: float = 0.0
    early: int = 0

    def lines(self) -> list[str]:
        return [
            f"releases      {self.count}",
            f"mean dev %    {self.mean_pct:.6f}",
            f"max dev %     {self.max_pct:.6f}",
            f"overruns      {self.overruns}",
            f"early         {self.early}",
            f"lateness ns   mean={self.mean_lateness_ns:.0f} p50={self.p50_lateness_ns:.0f} "
            f"p99={self.p99_lateness_ns:.0f} max={self.max_lateness_ns:.0f}",
        ]


def calibrate(clock: Callable[[], int], reference: Callable[[], int], interval_ns: int) -> tuple[float, int]:
    """Ticks-per-ns of ``clock`` against ``reference`` (an ns clock), plus clock granularity."""
    gran = None
    last = clock()
    for _ in range(1000):
        now = clock()
        if now != last:
            d = now - last
            gran = d if gran is None else min(gran, d)
            last = now
    r0, c0 = reference(), clock()
    while reference() - r0 < interval_ns:
        pass
    r1, c1 = reference(), clock()
    return (c1 - c0) / (r1 - r0), max(1, gran or 1)


class TimingAligner:
    def __init__(self, clock: Callable[[], int] = time.perf_counter_ns,
                 reference: Callable[[], int] = time.monotonic_ns, *,
                 hybrid: bool = False, sleep_margin_ns: int = 100_000,
                 calibration_ns: int = 20_000_000, overrun_tolerance_ns: int = 50_000,
                 deliver: Callable[[ReleaseRecord], None] | None = None):
        self.clock = clock
        self.reference = reference
        self.hybrid = hybrid
        self.sleep_margin_ns = sleep_margin_ns
        self.calibration_ns = calibration_ns
        self.overrun_tolerance_ns = overrun_tolerance_ns
        self.deliver = deliver
        self.wall: WallAnchor | None = None
        self.records: list[ReleaseRecord] = []
        self._inbox: queue.SimpleQueue = queue.SimpleQueue()
        self._thread: threading.Thread | None = None

    def anchor(self) -> WallAnchor:
        if self.wall is not None:
            raise AlreadyAnchored("alignment unit is already anchored")
        scale, gran = calibrate(self.clock, self.reference, self.calibration_ns)
        self.wall = WallAnchor(self.clock(), scale, gran)
        return self.wall

    def release(self, request_id: int, sim_completion: int) -> ReleaseRecord:
        wall = self.wall
        if wall is None:
            raise NotAnchored("anchor() must run before the first release")
        clock = self.clock
        target = wall.to_wall(sim_completion)
        now = clock()
        overrun = now >= target
        if not overrun:
            if self.hybrid:
                ahead_ns = (target - now) / wall.scale - self.sleep_margin_ns
                if ahead_ns > 0:
                    time.sleep(ahead_ns / 1e9)
                # Yielding spin: keeps the interpreter lock available to the event loop.
                while clock() < target:
                    time.sleep(0)
            else:
                while clock() < target:
                    pass
        actual = clock()
        lateness = round((actual - target) / wall.scale)
        # Late hand-off, or released later than the tolerance: both are reported.
        overrun = overrun or lateness > self.overrun_tolerance_ns
        rec = ReleaseRecord(request_id, sim_completion, target, actual, lateness, overrun)
        if self.deliver is not None:
            self.deliver(rec)
        self.records.append(rec)
        return rec

    # -- dedicated thread ----------------------------------------------------

    def start(self) -> None:
        if self.wall is None:
            self.anchor()
        self._thread = threading.Thread(target=self._worker, name="timing-aligner", daemon=True)
        self._thread.start()

    def submit(self, request_id: int, sim_completion: int) -> None:
        """Non-blocking hand-off from the event loop."""
        self._inbox.put((request_id, sim_completion))

    def close(self) -> None:
        """Release everything already submitted, then stop the thread."""
        if self._thread is None:
            return
        self._inbox.put(_STOP)
        self._thread.join()
        self._thread = None

    def _worker(self) -> None:
        pin_current_thread("aligner")
        get = self._inbox.get
        while True:
            item = get()
            if item is _STOP:
                return
            self.release(*item)

    # -- reporting -----------------------------------------------------------

    def lateness_report(self) -> LatenessReport:
        wall = self.wall
        if not self.records or wall is None:
            return LatenessReport()
        devs = []
        for r in self.records:
            span = r.wall_target - wall.epoch
            if span > 0:
                devs.append(abs(r.wall_actual - r.wall_target) / span * 100.0)
        lat = sorted(r.lateness_ns for r in self.records)
        return LatenessReport(
            count=len(self.records),
            mean_pct=statistics.fmean(devs) if devs else 0.0,
            max_pct=max(devs) if devs else 0.0,
            overruns=sum(1 for r in self.records if r.overrun),
            mean_lateness_ns=statistics.fmean(lat),
            p50_lateness_ns=float(lat[len(lat) // 2]),
            p99_lateness_ns=float(lat[min(len(lat) - 1, int(0.99 * len(lat)))]),
            max_lateness_ns=float(lat[-1]),
            early=sum(1 for r in self.records if r.wall_actual < r.wall_target - wall.granularity),
        )

    def release_lines(self, sim_offset: int = 0) -> list[str]:
        """Release-log lines: id, sim_completion, wall_target, wall_actual (ns since anchor), lateness, overrun."""
        wall = self.wall
        out = []
        for r in self.records:
            out.append(f"{r.request_id} {r.sim_completion + sim_offset} "
                       f"{round(wall.to_ns(r.wall_target)) + sim_offset} "
                       f"{round(wall.to_ns(r.wall_actual)) + sim_offset} {r.lateness_ns} {int(r.overrun)}")
        return out
