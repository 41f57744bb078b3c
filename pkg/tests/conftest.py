import random
import sys

import pytest

from rtnand.config import SimConfig
from rtnand.faults import FaultConfig
from rtnand.flash_array import FlashArray, Geometry, PageAddress
from rtnand.timing import LatencyDist, OpKind, TimingConfig

SMALL = Geometry(buses=2, chips_per_bus=2, blocks_per_chip=8, pages_per_block=8, page_size_bytes=4096)


def no_jitter_timing(**kw) -> TimingConfig:
    """Deterministic latencies: read 50us, program 600us, erase 3ms."""
    base = dict(
        read_latency=LatencyDist(50_000, 50_000, 1.0, 0.0),
        program_latency=LatencyDist(600_000, 600_000, 1.0, 0.0),
        erase_latency=LatencyDist(3_000_000, 3_000_000, 1.0, 0.0),
    )
    base.update(kw)
    return TimingConfig(**base)


@pytest.fixture
def small_geometry():
    return SMALL


@pytest.fixture
def small_config():
    return SimConfig(geometry=SMALL)


@pytest.fixture
def flat_config():
    return SimConfig(geometry=SMALL, timing=no_jitter_timing())


@pytest.fixture
def array():
    return FlashArray(SMALL)


def pattern(seed: int, size: int = 4096) -> bytes:
    return random.Random(seed).randbytes(size)


def faulty(**kw) -> FaultConfig:
    return FaultConfig(**kw)


__all__ = ["SMALL", "no_jitter_timing", "pattern", "faulty", "PageAddress", "OpKind"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
