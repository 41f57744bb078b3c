import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtnand.sim_core import EventKind, EventLoop, EventQueue, PastTimeError


def test_single_event_is_head():
    loop = EventLoop()
    loop.schedule(100, EventKind.PHASE_END, "x")
    head = loop.queue.peek()
    assert head.time == 100 and head.payload == "x"


def test_equal_times_pop_fifo():
    q = EventQueue()
    q.push(50, EventKind.PHASE_END, "A")
    q.push(50, EventKind.PHASE_END, "B")
    assert [q.pop().payload, q.pop().payload] == ["A", "B"]


def test_thousand_random_events_match_sort():
    rng = random.Random(9)
    q = EventQueue()
    pushed = [q.push(rng.randrange(10_000), EventKind.PHASE_START) for _ in range(1000)]
    popped = [q.pop() for _ in range(1000)]
    assert [(e.time, e.seq) for e in popped] == sorted((e.time, e.seq) for e in pushed)


def test_schedule_in_past_rejected():
    loop = EventLoop()
    loop.schedule(10, EventKind.PHASE_END)
    loop.run_step()
    with pytest.raises(PastTimeError):
        loop.schedule(5, EventKind.PHASE_END)


def test_empty_step_is_noop():
    loop = EventLoop()
    assert loop.run_step() is None
    assert loop.now() == 0


def test_run_until_before_head():
    loop = EventLoop()
    loop.schedule(10, EventKind.PHASE_END)
    assert loop.run_until(0) == 0
    assert loop.now() == 0


def test_now_tracks_last_event():
    loop = EventLoop()
    assert loop.now() == 0
    loop.schedule(77, EventKind.PHASE_END)
    loop.run_step()
    assert loop.now() == 77


@given(times=st.lists(st.integers(0, 10**9), min_size=1, max_size=200))
def test_now_is_monotone_and_bounded(times):
    loop = EventLoop()
    seen = []
    loop.on(EventKind.PHASE_END, lambda ev: seen.append(loop.now()))
    for t in times:
        loop.schedule(t, EventKind.PHASE_END)
    loop.run_until()
    assert seen == sorted(seen)
    assert max(seen) <= max(times)


def test_handlers_can_chain_events():
    loop = EventLoop()
    order = []

    def on_start(ev):
        order.append(("start", ev.time))
        loop.schedule(ev.time + 5, EventKind.PHASE_END)

    loop.on(EventKind.PHASE_START, on_start)
    loop.on(EventKind.PHASE_END, lambda ev: order.append(("end", ev.time)))
    loop.schedule(1, EventKind.PHASE_START)
    assert loop.run_until() == 2
    assert order == [("start", 1), ("end", 6)]


def test_posted_work_runs_before_next_pop():
    loop = EventLoop()
    hits = []
    loop.on(EventKind.PHASE_END, lambda ev: hits.append(ev.payload))
    loop.post(lambda: loop.schedule(3, EventKind.PHASE_END, "posted"))
    loop.run_until()
    assert hits == ["posted"]


def test_ack_goes_to_external_sink():
    loop = EventLoop()
    out = []
    loop.external_sink = out.append
    loop.schedule(4, EventKind.ACK_DEPARTURE, "r")
    loop.schedule(5, EventKind.PHASE_END)
    loop.run_until()
    assert [e.payload for e in out] == ["r"]


def test_reset():
    loop = EventLoop()
    loop.schedule(4, EventKind.PHASE_END)
    loop.run_step()
    loop.schedule(9, EventKind.PHASE_END)
    loop.reset()
    assert loop.now() == 0 and len(loop.queue) == 0
