"""Trace replay and log comparison."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .config import SimConfig
from .controller import FlashRequest, RequestStatus
from .edf import TransferTask
from .flash_array import FlashArray, PageAddress
from .rt_align import LatenessReport, ReleaseRecord, TimingAligner
from .simulator import Mode, Simulator
from .traces import ResultLine, TraceLine, check_geometry, materialize_payload

_STATUS = {RequestStatus.OK: "OK", RequestStatus.FAIL: "Fail", RequestStatus.DROPPED: "Dropped"}


class IdMismatch(ValueError):
    pass


@dataclass
class RunOutcome:
    results: list[ResultLine]
    sim: Simulator
    requests: dict[int, FlashRequest]
    release_lines: list[str] = field(default_factory=list)
    release_records: list[tuple[int, ReleaseRecord]] = field(default_factory=list)  # (epoch offset, record)
    report: LatenessReport | None = None
    stats: dict[str, int] = field(default_factory=dict)
    power_failures: int = 0

    @property
    def array(self) -> FlashArray:
        return self.sim.array


def merged_report(aligners: list[TimingAligner]) -> LatenessReport:
    """Lateness report over all epochs; each deviation uses its own epoch's anchor."""
    pairs = [(r, al.wall) for al in aligners if al.wall is not None for r in al.records]
    if not pairs:
        return LatenessReport()
    devs = [abs(r.wall_actual - r.wall_target) / (r.wall_target - w.epoch) * 100.0
            for r, w in pairs if r.wall_target > w.epoch]
    lat = sorted(r.lateness_ns for r, _ in pairs)
    return LatenessReport(
        count=len(pairs),
        mean_pct=float(np.mean(devs)) if devs else 0.0,
        max_pct=float(np.max(devs)) if devs else 0.0,
        overruns=sum(1 for r, _ in pairs if r.overrun),
        mean_lateness_ns=float(np.mean(lat)),
        p50_lateness_ns=float(lat[len(lat) // 2]),
        p99_lateness_ns=float(lat[min(len(lat) - 1, int(0.99 * len(lat)))]),
        max_lateness_ns=float(lat[-1]),
        early=sum(1 for r, w in pairs if r.wall_actual < r.wall_target - w.granularity),
    )


def replay(config: SimConfig, trace: list[TraceLine], *, mode: Mode | str = Mode.VT, seed: int | None = None,
           pf_times: list[int] | tuple[int, ...] = (), array: FlashArray | None = None,
           record_events: bool = False, base_dir: str | os.PathLike = ".",
           executor_hook: Callable[[TransferTask], None] | None = None,
           keep_requests: bool = False) -> RunOutcome:
    """Replay ``trace`` (global ns timestamps) and return one result line per trace line.

    Each power failure ends an epoch: requests issued before it and not yet
    acknowledged are reported Dropped; the simulator reboots and requests
    issued at or after the failure replay in the next epoch, with their
    times rebased onto that epoch.
    """
    check_geometry(trace, config.geometry)
    sim = Simulator(config, mode=mode, seed=seed, array=array, record_events=record_events,
                    executor_hook=executor_hook)
    page_size = config.geometry.page_size_bytes
    n = len(trace)
    results: list[ResultLine | None] = [None] * n
    requests: dict[int, FlashRequest] = {}
    depth = config.controller.queue_depth
    payload_cache: dict[str, bytes] = {}
    bounds = sorted(set(pf_times))
    state = {"ptr": 0, "offset": 0, "end": None}
    stats: dict[str, int] = {}
    release_records: list[tuple[int, ReleaseRecord]] = []
    release_lines: list[str] = []

    def payload_of(spec: str) -> bytes:
        data = payload_cache.get(spec)
        if data is None:
            data = materialize_payload(spec, page_size, base_dir)
            if spec.startswith("const:"):
                payload_cache[spec] = data
        return data

    def fill() -> None:
        ctrl = sim.controller
        ptr, end, offset = state["ptr"], state["end"], state["offset"]
        while ptr < n and len(ctrl.outstanding) < depth:
            ln = trace[ptr]
            if end is not None and ln.t_issue >= end:
                break
            data = payload_of(ln.payload) if ln.payload != "-" else None
            req = sim.submit(ln.kind, PageAddress(ln.bus, ln.chip, ln.block, ln.page), data,
                             t_issue=max(0, ln.t_issue - offset), request_id=ptr)
            if keep_requests:
                requests[ptr] = req
            ptr += 1
        state["ptr"] = ptr

    def on_ack(req: FlashRequest) -> None:
        off = state["offset"]
        results[req.id] = ResultLine(req.id, trace[req.id].t_issue, req.t_complete_sim + off, None,
                                     _STATUS[req.status])
        fill()

    def on_pf(dropped: list[FlashRequest]) -> None:
        for req in dropped:
            results[req.id] = ResultLine(req.id, trace[req.id].t_issue, None, None, "Dropped")

    sim.ack_listeners.append(on_ack)
    sim.pf_listeners.append(on_pf)

    def collect_epoch_stats() -> None:
        for k, v in sim.controller.stats.items():
            stats[k] = stats.get(k, 0) + v

    def collect_releases(al: TimingAligner | None, offset: int) -> None:
        if al is None:
            return
        release_lines.extend(al.release_lines(offset))
        for r in al.records:
            release_records.append((offset, r))
            res = results[r.request_id]
            results[r.request_id] = res._replace(wall_release=round(al.wall.to_ns(r.wall_actual)) + offset)

    pf_count = 0
    epochs = [0, *bounds]
    for i, start in enumerate(epochs):
        end = epochs[i + 1] if i + 1 < len(epochs) else None
        state["offset"], state["end"] = start, end
        if end is not None:
            sim.schedule_power_failure(end - start)
        fill()
        sim.run()
        collect_epoch_stats()
        if sim.halted:
            pf_count += 1
            # Issued before the failure but never accepted by the device.
            while state["ptr"] < n and trace[state["ptr"]].t_issue < end:
                p = state["ptr"]
                results[p] = ResultLine(p, trace[p].t_issue, None, None, "Dropped")
                state["ptr"] += 1
            al = sim.aligner
            sim.reboot()
            collect_releases(al, start)
        else:
            sim.close()
            collect_releases(sim.aligner, start)
            if state["ptr"] < n:
                raise RuntimeError("replay stalled with unsubmitted requests")
    if sim.running:
        sim.close()

    missing = [i for i, r in enumerate(results) if r is None]
    if missing:
        raise RuntimeError(f"{len(missing)} requests produced no result (first id {missing[0]})")
    return RunOutcome(results=results, sim=sim, requests=requests, release_lines=release_lines,
                      release_records=release_records,
                      report=merged_report(sim.aligners) if sim.rt else None,
                      stats=stats, power_failures=pf_count)


# -- comparison --------------------------------------------------------------

@dataclass(frozen=True)
class CompareSummary:
    count: int
    mean_pct: float
    max_pct: float
    skipped: int
    rows: list[tuple[int, int, int, float]]  # id, t_a, t_b, deviation %

    def csv(self) -> str:
        lines = ["id,t_a,t_b,deviation_pct"]
        lines += [f"{i},{a},{b},{d:.6f}" for i, a, b, d in self.rows]
        return "\n".join(lines) + "\n"


def compare(log_a: list[ResultLine], log_b: list[ResultLine]) -> CompareSummary:
    """Per-request completion deviation |t_a - t_b| / t_b, t measured from run start.

    RT logs contribute their wall release time, VT logs their simulated
    completion. Requests dropped in either log are skipped.
    """
    a = {r.id: r for r in log_a}
    b = {r.id: r for r in log_b}
    if set(a) != set(b):
        only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
        raise IdMismatch(f"ids only in A: {only_a[:5]}, only in B: {only_b[:5]}")
    ids, ta, tb = [], [], []
    skipped = 0
    for rid in sorted(a):
        ca, cb = a[rid].completion, b[rid].completion
        if ca is None or cb is None:
            skipped += 1
            continue
        ids.append(rid)
        ta.append(ca)
        tb.append(cb)
    if not ids:
        return CompareSummary(0, 0.0, 0.0, skipped, [])
    dev = _kernels.deviation_pct(np.array(ta, dtype=np.int64), np.array(tb, dtype=np.int64))
    rows = list(zip(ids, ta, tb, dev.tolist()))
    return CompareSummary(len(ids), float(dev.mean()), float(dev.max()), skipped, rows)
