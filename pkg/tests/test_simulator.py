import threading
import time

import pytest

from rtnand.config import RealtimeConfig, SimConfig
from rtnand.controller import RequestStatus
from rtnand.faults import ALL_STATES, FaultConfig
from rtnand.flash_array import FlashArray, PageAddress, PageState
from rtnand.simulator import EngineHalted, Mode, NotHalted, Simulator
from rtnand.timing import OpKind

from conftest import SMALL, no_jitter_timing, pattern

CFG = SimConfig(geometry=SMALL, timing=no_jitter_timing(), realtime=RealtimeConfig(spin="hybrid"))


def test_pf_before_any_request():
    sim = Simulator(CFG)
    before = sim.array.digest()
    sim.schedule_power_failure(0)
    sim.run()
    assert sim.halted and sim.array.digest() == before
    with pytest.raises(EngineHalted):
        sim.submit(OpKind.READ, PageAddress(0, 0, 0, 0))


def test_reboot_without_pf_rejected():
    with pytest.raises(NotHalted):
        Simulator(CFG).reboot()


def test_pf_during_program_array_busy():
    seen = set()
    for seed in range(40):
        sim = Simulator(CFG, seed=seed)
        req = sim.submit(OpKind.PROGRAM, PageAddress(0, 0, 0, 0), pattern(1))
        dropped = []
        sim.pf_listeners.append(dropped.extend)
        sim.schedule_power_failure(300_000)  # inside the 600us ArrayBusy
        sim.run()
        state = sim.array.page_state(PageAddress(0, 0, 0, 0))
        assert state in ALL_STATES
        seen.add(state)
        assert dropped == [req] and req.status == RequestStatus.DROPPED and req.t_complete_sim is None
    assert seen == set(ALL_STATES)


def test_pf_during_read_changes_nothing():
    arr = FlashArray(SMALL)
    arr.commit_program(PageAddress(0, 0, 0, 0), pattern(1))
    sim = Simulator(CFG, array=arr)
    before = arr.digest()
    sim.submit(OpKind.READ, PageAddress(0, 0, 0, 0))
    sim.schedule_power_failure(20_000)
    sim.run()
    assert sim.halted and arr.digest() == before


def test_reboot_keeps_data_and_accepts_new_work():
    sim = Simulator(CFG)
    sim.submit(OpKind.PROGRAM, PageAddress(1, 0, 0, 0), pattern(9))
    sim.run()
    sim.submit(OpKind.PROGRAM, PageAddress(1, 1, 0, 0), pattern(3))
    sim.schedule_power_failure(sim.now() + 1_000)
    sim.run()
    sim.reboot()
    assert sim.epoch == 1 and sim.now() == 0
    r = sim.submit(OpKind.READ, PageAddress(1, 0, 0, 0))
    sim.run()
    assert r.result == (pattern(9), PageState.PROGRAMMED_DATA_OK)


def test_no_ack_for_dropped_requests():
    sim = Simulator(CFG)
    acked = []
    sim.ack_listeners.append(lambda r: acked.append(r.id))
    reqs = [sim.submit(OpKind.ERASE, PageAddress(0, 0, b, 0)) for b in range(4)]
    sim.schedule_power_failure(4_000_000)
    sim.run()
    dropped = {r.id for r in reqs if r.status == RequestStatus.DROPPED}
    assert dropped and not (dropped & set(acked))


def test_event_log_lines_have_epochs():
    sim = Simulator(CFG, record_events=True)
    sim.submit(OpKind.READ, PageAddress(0, 0, 0, 0))
    sim.run()
    lines = sim.event_log_lines()
    assert len(lines) == 9 and lines[0].startswith("0 ")
    assert "REQUEST_ARRIVAL" in lines[0]


def test_rt_mode_matches_vt_results():
    def run(mode):
        sim = Simulator(CFG, mode=mode, seed=3)
        reqs = [sim.submit(OpKind.PROGRAM, PageAddress(b % 2, 0, b, 0), pattern(b), t_issue=b * 50_000)
                for b in range(6)]
        reqs += [sim.submit(OpKind.READ, PageAddress(b % 2, 0, b, 0), t_issue=400_000) for b in range(6)]
        sim.run()
        sim.close()
        return sim, [(r.t_complete_sim, r.status) for r in reqs]

    vt_sim, vt = run(Mode.VT)
    rt_sim, rt = run(Mode.RT)
    assert vt == rt
    assert vt_sim.array.digest() == rt_sim.array.digest()
    recs = rt_sim.aligner.records
    assert len(recs) == 12
    assert [r.sim_completion for r in recs] == sorted(r.sim_completion for r in recs)


def test_live_submission_in_rt_mode():
    sim = Simulator(CFG, mode=Mode.RT)
    stop = threading.Event()
    got = []
    worker = threading.Thread(target=sim.serve, args=(stop,))
    worker.start()
    sim.post_submit(OpKind.READ, PageAddress(0, 0, 0, 0), on_submitted=got.append)
    deadline = time.monotonic() + 2
    while (not got or got[0].t_complete_sim is None) and time.monotonic() < deadline:
        time.sleep(0.005)
    stop.set()
    worker.join()
    sim.close()
    assert got and got[0].status == RequestStatus.OK
    assert got[0].t_complete_sim - got[0].t_issue == 182 + 50_000 + 124_121


def test_run_restores_gc_state(small_config):
    import gc

    sim = Simulator(small_config)
    sim.submit(OpKind.READ, PageAddress(0, 0, 0, 0))
    assert gc.isenabled()
    sim.run()
    assert gc.isenabled()
    gc.disable()
    try:
        sim.run()
        assert not gc.isenabled()
    finally:
        gc.enable()
