"""In-memory NAND contents with per-page abstract states.

Storage is sparse: only pages that differ from the factory state
(ErasedProgrammable, all 0xFF) hold a record, so the default 4096x128x4 KiB
chip geometry costs nothing until written.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple


class PageState(IntEnum):
    ERASED_PROGRAMMABLE = 0
    ERASED_NOT_PROGRAMMABLE = 1
    PROGRAMMED_DATA_OK = 2
    PROGRAMMED_DATA_NOT_OK = 3


ERASED_STATES = (PageState.ERASED_PROGRAMMABLE, PageState.ERASED_NOT_PROGRAMMABLE)


class FlashArrayError(Exception):
    pass


class OutOfBounds(FlashArrayError, IndexError):
    pass


class SizeMismatch(FlashArrayError, ValueError):
    pass


class MissingCorruptData(FlashArrayError, ValueError):
    pass


class GeometryMismatch(FlashArrayError):
    pass


@dataclass(frozen=True)
class Geometry:
    buses: int = 4
    chips_per_bus: int = 2
    blocks_per_chip: int = 4096
    pages_per_block: int = 128
    page_size_bytes: int = 4096

    def __post_init__(self):
        for name in ("buses", "chips_per_bus", "blocks_per_chip", "pages_per_block", "page_size_bytes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_chips(self) -> int:
        return self.buses * self.chips_per_bus

    @property
    def total_pages(self) -> int:
        return self.n_chips * self.blocks_per_chip * self.pages_per_block

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.buses, self.chips_per_bus, self.blocks_per_chip,
                self.pages_per_block, self.page_size_bytes)

    def check(self, addr: "PageAddress") -> None:
        bus, chip, block, page = addr
        if not (0 <= bus < self.buses and 0 <= chip < self.chips_per_bus
                and 0 <= block < self.blocks_per_chip and 0 <= page < self.pages_per_block):
            raise OutOfBounds(f"{addr} outside {self}")


class PageAddress(NamedTuple):
    bus: int
    chip: int
    block: int
    page: int = 0

    @property
    def block_key(self) -> tuple[int, int, int]:
        return (self.bus, self.chip, self.block)


_MAGIC = b"RTNF"
_SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


class FlashArray:
    def __init__(self, geometry: Geometry | None = None):
        self.geometry = geometry or Geometry()
        self._erased = b"\xff" * self.geometry.page_size_bytes
        # (bus, chip, block) -> {page: (state, data or None for erased states)}
        self._blocks: dict[tuple[int, int, int], dict[int, tuple[PageState, bytes | None]]] = {}

    @property
    def erased_page(self) -> bytes:
        return self._erased

    def read_page(self, addr: PageAddress) -> tuple[bytes, PageState]:
        self.geometry.check(addr)
        rec = self._blocks.get((addr[0], addr[1], addr[2]))
        if rec is not None:
            entry = rec.get(addr[3])
            if entry is not None:
                state, data = entry
                return (self._erased if data is None else data), state
        return self._erased, PageState.ERASED_PROGRAMMABLE

    def page_state(self, addr: PageAddress) -> PageState:
        return self.read_page(addr)[1]

    def commit_program(self, addr: PageAddress, data: bytes) -> None:
        self.geometry.check(addr)
        if len(data) != self.geometry.page_size_bytes:
            raise SizeMismatch(f"expected {self.geometry.page_size_bytes} bytes, got {len(data)}")
        self._put(addr, PageState.PROGRAMMED_DATA_OK, bytes(data))

    def commit_erase(self, addr: PageAddress | tuple[int, int, int]) -> None:
        bus, chip, block = addr[0], addr[1], addr[2]
        self.geometry.check(PageAddress(bus, chip, block, 0))
        self._blocks.pop((bus, chip, block), None)

    def set_state(self, addr: PageAddress, state: PageState, corrupted_data: bytes | None = None) -> None:
        self.geometry.check(addr)
        state = PageState(state)
        if state == PageState.PROGRAMMED_DATA_NOT_OK:
            if corrupted_data is None:
                raise MissingCorruptData("ProgrammedDataNotOk requires the corrupted buffer")
            if len(corrupted_data) != self.geometry.page_size_bytes:
                raise SizeMismatch("corrupted buffer has the wrong length")
            self._put(addr, state, bytes(corrupted_data))
        elif state in ERASED_STATES:
            self._put(addr, state, None)
        else:
            if corrupted_data is None:
                data, _ = self.read_page(addr)
            else:
                data = bytes(corrupted_data)
            if len(data) != self.geometry.page_size_bytes:
                raise SizeMismatch("data has the wrong length")
            self._put(addr, state, data)

    def _put(self, addr: PageAddress, state: PageState, data: bytes | None) -> None:
        key = (addr[0], addr[1], addr[2])
        if state == PageState.ERASED_PROGRAMMABLE:
            rec = self._blocks.get(key)
            if rec is not None:
                rec.pop(addr[3], None)
                if not rec:
                    del self._blocks[key]
            return
        self._blocks.setdefault(key, {})[addr[3]] = (state, data)

    # -- inspection ----------------------------------------------------------

    def iter_written(self):
        """Yield ``(addr, state, data)`` for every page not in factory state, in address order."""
        for key in sorted(self._blocks):
            rec = self._blocks[key]
            for page in sorted(rec):
                state, data = rec[page]
                yield PageAddress(*key, page), state, (self._erased if data is None else data)

    def state_counts(self) -> dict[PageState, int]:
        counts = {s: 0 for s in PageState}
        written = 0
        for rec in self._blocks.values():
            for state, _ in rec.values():
                counts[state] += 1
                written += 1
        counts[PageState.ERASED_PROGRAMMABLE] += self.geometry.total_pages - written
        return counts

    def digest(self) -> str:
        """SHA-256 over the full logical contents (geometry, states, data)."""
        h = hashlib.sha256()
        h.update(struct.pack("<5I", *self.geometry.as_tuple()))
        for addr, state, data in self.iter_written():
            h.update(struct.pack("<4IB", *addr, int(state)))
            h.update(data)
        return h.hexdigest()

    def check_invariants(self) -> None:
        """Raise AssertionError if any record breaks the erased-reads-0xFF rule."""
        for addr, state, data in self.iter_written():
            assert state in PageState.__members__.values(), (addr, state)
            if state in ERASED_STATES:
                assert data == self._erased, addr

    # -- persistence ---------------------------------------------------------

    def snapshot(self, path: str | os.PathLike) -> None:
        g = self.geometry
        page_rec = 1 + g.page_size_bytes
        blank = bytes([PageState.ERASED_PROGRAMMABLE]) + self._erased
        blank_block = blank * g.pages_per_block
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _SNAPSHOT_VERSION, *g.as_tuple()))
            for bus in range(g.buses):
                for chip in range(g.chips_per_bus):
                    for block in range(g.blocks_per_chip):
                        rec = self._blocks.get((bus, chip, block))
                        if rec is None:
                            fh.write(blank_block)
                            continue
                        buf = bytearray(blank_block)
                        for page, (state, data) in rec.items():
                            off = page * page_rec
                            buf[off] = int(state)
                            if data is not None:
                                buf[off + 1:off + page_rec] = data
                        fh.write(buf)

    def restore(self, path: str | os.PathLike) -> None:
        g = self.geometry
        page_rec = 1 + g.page_size_bytes
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise FlashArrayError("truncated snapshot header")
            magic, version, *dims = _HEADER.unpack(head)
            if magic != _MAGIC or version != _SNAPSHOT_VERSION:
                raise FlashArrayError(f"not a v{_SNAPSHOT_VERSION} snapshot")
            if tuple(dims) != g.as_tuple():
                raise GeometryMismatch(f"snapshot geometry {tuple(dims)} != {g.as_tuple()}")
            blank = bytes([PageState.ERASED_PROGRAMMABLE]) + self._erased
            blank_block = blank * g.pages_per_block
            blocks: dict[tuple[int, int, int], dict[int, tuple[PageState, bytes | None]]] = {}
            block_len = page_rec * g.pages_per_block
            for bus in range(g.buses):
                for chip in range(g.chips_per_bus):
                    for block in range(g.blocks_per_chip):
                        raw = fh.read(block_len)
                        if len(raw) != block_len:
                            raise FlashArrayError("truncated snapshot body")
                        if raw == blank_block:
                            continue
                        rec = {}
                        for page in range(g.pages_per_block):
                            off = page * page_rec
                            state = PageState(raw[off])
                            data = raw[off + 1:off + page_rec]
                            if state == PageState.ERASED_PROGRAMMABLE:
                                continue
                            rec[page] = (state, None if state in ERASED_STATES else data)
                        if rec:
                            blocks[(bus, chip, block)] = rec
        self._blocks = blocks
