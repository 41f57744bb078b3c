import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtnand import _kernels
from rtnand.faults import FaultConfig, FaultEngine
from rtnand.flash_array import (ERASED_STATES, FlashArray, Geometry, GeometryMismatch, MissingCorruptData,
                                OutOfBounds, PageAddress, PageState, SizeMismatch)

from conftest import SMALL, pattern

FF = b"\xff" * 4096


def test_fresh_page_is_erased(array):
    assert array.read_page(PageAddress(0, 0, 0, 0)) == (FF, PageState.ERASED_PROGRAMMABLE)


def test_program_then_read(array):
    p = pattern(1)
    array.commit_program(PageAddress(0, 1, 2, 3), p)
    assert array.read_page(PageAddress(0, 1, 2, 3)) == (p, PageState.PROGRAMMED_DATA_OK)
    assert array.read_page(PageAddress(0, 1, 2, 4))[1] == PageState.ERASED_PROGRAMMABLE


def test_full_block_round_trip(array):
    pats = {p: pattern(100 + p) for p in range(SMALL.pages_per_block)}
    for p, data in pats.items():
        array.commit_program(PageAddress(1, 0, 5, p), data)
    assert all(array.read_page(PageAddress(1, 0, 5, p))[0] == d for p, d in pats.items())


def test_not_ok_page_differs_beyond_threshold(array):
    eng = FaultEngine(FaultConfig(), array)
    p = pattern(2)
    addr = PageAddress(0, 0, 0, 1)
    eng.apply_program_outcome(addr, p, True, False, random.Random(5))
    data, state = array.read_page(addr)
    assert state == PageState.PROGRAMMED_DATA_NOT_OK
    assert _kernels.popcount_xor(data, p) > eng.config.program_bitdiff_threshold


def test_bounds_and_sizes(array):
    with pytest.raises(OutOfBounds):
        array.read_page(PageAddress(0, 0, SMALL.blocks_per_chip, 0))
    with pytest.raises(OutOfBounds):
        array.read_page(PageAddress(SMALL.buses, 0, 0, 0))
    with pytest.raises(SizeMismatch):
        array.commit_program(PageAddress(0, 0, 0, 0), b"abc")


def test_erase_clears_block_only(array):
    for p in range(3):
        array.commit_program(PageAddress(0, 0, 4, p), pattern(p))
    array.commit_program(PageAddress(0, 0, 5, 0), pattern(9))
    array.commit_erase(PageAddress(0, 0, 4, 0))
    assert all(array.read_page(PageAddress(0, 0, 4, p)) == (FF, PageState.ERASED_PROGRAMMABLE)
               for p in range(SMALL.pages_per_block))
    assert array.read_page(PageAddress(0, 0, 5, 0)) == (pattern(9), PageState.PROGRAMMED_DATA_OK)


def test_erase_program_erase_restores_initial(array):
    before = array.digest()
    array.commit_erase((1, 1, 1))
    array.commit_program(PageAddress(1, 1, 1, 0), pattern(3))
    array.commit_erase((1, 1, 1))
    assert array.digest() == before


def test_set_state_examples(array):
    a = PageAddress(0, 0, 0, 0)
    array.set_state(a, PageState.ERASED_NOT_PROGRAMMABLE)
    assert array.read_page(a) == (FF, PageState.ERASED_NOT_PROGRAMMABLE)
    bad = pattern(4)
    array.set_state(a, PageState.PROGRAMMED_DATA_NOT_OK, bad)
    assert array.read_page(a) == (bad, PageState.PROGRAMMED_DATA_NOT_OK)
    with pytest.raises(MissingCorruptData):
        array.set_state(a, PageState.PROGRAMMED_DATA_NOT_OK)


@settings(max_examples=60, deadline=None)
@given(ops=st.lists(st.tuples(st.integers(0, 7), st.sampled_from(list(PageState)), st.integers(0, 3)),
                    max_size=40))
def test_set_state_never_breaks_erased_invariant(ops):
    arr = FlashArray(SMALL)
    for page, state, seed in ops:
        arr.set_state(PageAddress(0, 0, 0, page), state, pattern(seed))
    arr.check_invariants()
    for page in range(8):
        data, state = arr.read_page(PageAddress(0, 0, 0, page))
        if state in ERASED_STATES:
            assert data == FF


def test_state_counts_cover_geometry(array):
    array.commit_program(PageAddress(0, 0, 0, 0), pattern(1))
    array.set_state(PageAddress(0, 0, 0, 1), PageState.ERASED_NOT_PROGRAMMABLE)
    counts = array.state_counts()
    assert sum(counts.values()) == SMALL.total_pages
    assert counts[PageState.PROGRAMMED_DATA_OK] == 1
    assert counts[PageState.ERASED_NOT_PROGRAMMABLE] == 1


def test_snapshot_round_trip(array, tmp_path):
    rng = random.Random(7)
    for i in range(40):
        addr = PageAddress(rng.randrange(2), rng.randrange(2), rng.randrange(8), rng.randrange(8))
        array.set_state(addr, PageState(rng.randrange(4)), pattern(i))
    path = tmp_path / "snap.bin"
    array.snapshot(path)
    other = FlashArray(SMALL)
    other.restore(path)
    assert other.digest() == array.digest()
    assert list(other.iter_written()) == list(array.iter_written())


def test_snapshot_layout(tmp_path):
    g = Geometry(1, 1, 1, 2, 4)
    arr = FlashArray(g)
    arr.commit_program(PageAddress(0, 0, 0, 1), b"\x01\x02\x03\x04")
    path = tmp_path / "s.bin"
    arr.snapshot(path)
    raw = path.read_bytes()
    import struct

    assert raw[:4] == b"RTNF"
    assert struct.unpack("<6I", raw[4:28])[1:] == (1, 1, 1, 2, 4)
    assert raw[28:] == b"\x00\xff\xff\xff\xff" + b"\x02\x01\x02\x03\x04"


def test_restore_geometry_mismatch(array, tmp_path):
    path = tmp_path / "snap.bin"
    array.snapshot(path)
    with pytest.raises(GeometryMismatch):
        FlashArray(Geometry(2, 2, 8, 8, 2048)).restore(path)
