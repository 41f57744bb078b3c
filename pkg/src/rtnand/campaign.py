"""Fault campaigns: repeated replays with internal faults and power failures."""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import _kernels
from .config import SimConfig
from .flash_array import ERASED_STATES, FlashArray, PageAddress, PageState
from .harness import RunOutcome, replay
from .timing import OpKind
from .traces import TraceLine


class BadStrategy(ValueError):
    pass


@dataclass(frozen=True)
class PfStrategy:
    """``none``, ``fixed:T1,T2,...`` (ns) or ``uniform:K`` (K failures uniform over the trace span)."""

    kind: str = "none"
    times: tuple[int, ...] = ()
    count: int = 0

    @classmethod
    def parse(cls, text: str | None) -> "PfStrategy":
        if not text or text == "none":
            return cls()
        kind, _, arg = text.partition(":")
        try:
            if kind == "fixed":
                return cls("fixed", times=tuple(sorted(int(x) for x in arg.split(",") if x.strip())))
            if kind == "uniform":
                return cls("uniform", count=int(arg or 1))
        except ValueError:
            pass
        raise BadStrategy(f"bad power-failure strategy {text!r}")

    def draw(self, rng: random.Random, span_end: int) -> list[int]:
        if self.kind == "fixed":
            return list(self.times)
        if self.kind == "uniform":
            return sorted(rng.randrange(max(1, span_end)) for _ in range(self.count))
        return []


def check_run(outcome: RunOutcome, trace: list[TraceLine], threshold: int) -> list[str]:
    """Invariant violations for one replay (empty list when all hold)."""
    problems = []
    array = outcome.array
    ids = [r.id for r in outcome.results]
    if sorted(ids) != list(range(len(trace))):
        problems.append("result log does not list every request exactly once")
    released = {r.request_id for _, r in outcome.release_records}
    for r in outcome.results:
        if r.status == "Dropped" and (r.t_complete_sim is not None or r.id in released):
            problems.append(f"request {r.id} dropped but acknowledged")
        if r.t_complete_sim is not None and r.t_complete_sim < r.t_issue:
            problems.append(f"request {r.id} completes before issue")
    erased = array.erased_page
    for addr, state, data in array.iter_written():
        if state not in PageState.__members__.values():
            problems.append(f"{addr}: state {state!r} outside the four-state set")
        if state in ERASED_STATES and data != erased:
            problems.append(f"{addr}: erased page does not read all 0xFF")
    # Corruption detectability, for pages whose last array-affecting request was a program.
    last_writer: dict[PageAddress, object] = {}
    for rid in sorted(outcome.requests):
        req = outcome.requests[rid]
        if not req.resolved:
            continue
        if req.kind == OpKind.PROGRAM:
            last_writer[req.addr] = req
        elif req.kind == OpKind.ERASE:
            for p in [a for a in last_writer if a.block_key == req.addr.block_key]:
                del last_writer[p]
    for addr, req in last_writer.items():
        data, state = array.read_page(addr)
        if state == PageState.PROGRAMMED_DATA_NOT_OK and _kernels.popcount_xor(data, req.data) <= threshold:
            problems.append(f"{addr}: corrupted page within {threshold} bits of intended data")
    return problems


def fault_campaign(config: SimConfig, trace: list[TraceLine], n_runs: int, seed: int,
                   strategy: PfStrategy | str | None = None) -> dict:
    if not isinstance(strategy, PfStrategy):
        strategy = PfStrategy.parse(strategy)
    span_end = (trace[-1].t_issue if trace else 0) + config.timing.erase_latency.mode_b
    runs = []
    totals = {"internal_faults": 0, "fail_acks": 0, "power_failures": 0, "dropped": 0,
              "illegal_programs": 0, "violations": 0}
    tallies = {s.name: 0 for s in PageState}
    for i in range(n_runs):
        rng = random.Random(f"campaign:{seed}:{i}")
        run_seed = rng.getrandbits(63)
        pf_times = strategy.draw(rng, span_end)
        out = replay(config, trace, seed=run_seed, pf_times=pf_times, array=FlashArray(config.geometry),
                     keep_requests=True)
        problems = check_run(out, trace, config.fault.program_bitdiff_threshold)
        counts = out.array.state_counts()
        run = {
            "run": i,
            "seed": run_seed,
            "pf_times": pf_times,
            "internal_faults": out.stats.get("internal_faults", 0),
            "fail_acks": sum(1 for r in out.results if r.status == "Fail"),
            "dropped": sum(1 for r in out.results if r.status == "Dropped"),
            "power_failures": out.power_failures,
            "illegal_programs": out.stats.get("illegal_programs", 0),
            "page_states": {s.name: counts[s] for s in PageState},
            "violations": problems,
        }
        runs.append(run)
        for k in ("internal_faults", "fail_acks", "dropped", "power_failures", "illegal_programs"):
            totals[k] += run[k]
        totals["violations"] += len(problems)
        for s in PageState:
            tallies[s.name] += counts[s]
    return {"runs": n_runs, "seed": seed, "strategy": strategy.kind, "totals": totals,
            "page_state_totals": tallies, "per_run": runs}


__all__ = ["fault_campaign", "check_run", "PfStrategy", "BadStrategy"]
