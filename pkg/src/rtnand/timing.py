"""Phase decomposition and duration model for erase/program/read."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple


class OpKind(IntEnum):
    READ = 0
    PROGRAM = 1
    ERASE = 2


class PhaseKind(IntEnum):
    CMD_ADDR = 0
    DATA_IN = 1
    ARRAY_BUSY = 2
    DATA_OUT = 3
    STATUS_CHECK = 4


class Resource(IntEnum):
    BUS = 0
    CHIP = 1


class MlcMode(IntEnum):
    RANDOM_MIXTURE = 0
    PAGE_PAIR_DETERMINISTIC = 1


PHASE_RESOURCE = {
    PhaseKind.CMD_ADDR: Resource.BUS,
    PhaseKind.DATA_IN: Resource.BUS,
    PhaseKind.ARRAY_BUSY: Resource.CHIP,
    PhaseKind.DATA_OUT: Resource.BUS,
    PhaseKind.STATUS_CHECK: Resource.BUS,
}

NS_PER_S = 1_000_000_000


class UnknownOp(ValueError):
    pass


@dataclass(frozen=True)
class LatencyDist:
    """Two-mode latency mixture with optional normal jitter (all in ns)."""

    mode_a: int
    mode_b: int
    weight_a: float = 1.0
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.mode_a <= 0 or self.mode_b <= 0:
            raise ValueError("latency modes must be positive")
        if self.mode_a > self.mode_b:
            raise ValueError("mode_a must not exceed mode_b")
        if not 0.0 <= self.weight_a <= 1.0:
            raise ValueError("weight_a must be in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @property
    def mean(self) -> float:
        return self.weight_a * self.mode_a + (1.0 - self.weight_a) * self.mode_b

    def jittered(self, base: int, rng: random.Random) -> int:
        if self.jitter_sigma == 0:
            return base
        # Truncated normal: redraw until strictly positive.
        while True:
            v = round(base + rng.gauss(0.0, self.jitter_sigma))
            if v > 0:
                return v


# Placeholder MLC defaults: orders of magnitude only, not measured values.
DEFAULT_READ = LatencyDist(50_000, 110_000, 0.5, 1_000.0)
DEFAULT_PROGRAM = LatencyDist(600_000, 1_600_000, 0.5, 10_000.0)
DEFAULT_ERASE = LatencyDist(3_000_000, 3_000_000, 1.0, 50_000.0)


@dataclass(frozen=True)
class TimingConfig:
    bus_width_bits: int = 8
    bus_freq_hz: int = 33_000_000
    cmd_addr_cycles: int = 6
    status_check_cycles: int = 3
    read_latency: LatencyDist = field(default=DEFAULT_READ)
    program_latency: LatencyDist = field(default=DEFAULT_PROGRAM)
    erase_latency: LatencyDist = field(default=DEFAULT_ERASE)
    mlc_mode: MlcMode = MlcMode.RANDOM_MIXTURE

    def __post_init__(self):
        if self.bus_freq_hz <= 0:
            raise ValueError("bus_freq_hz must be positive")
        if self.bus_width_bits not in (8, 16):
            raise ValueError("bus_width_bits must be 8 or 16")
        if self.cmd_addr_cycles < 0 or self.status_check_cycles < 0:
            raise ValueError("cycle counts must be >= 0")


class Phase(NamedTuple):
    kind: PhaseKind
    duration: int
    resource: Resource
    owner: int


def _div_round(num: int, den: int) -> int:
    # Round half up on non-negative integers; avoids float error on large counts.
    return (2 * num + den) // (2 * den)


class TimingModel:
    """Durations for every phase, given a timing config and a page size."""

    def __init__(self, config: TimingConfig | None = None, page_size: int = 4096):
        self.config = config or TimingConfig()
        self.page_size = page_size
        self.cmd_addr_ns = self.cycles_time(self.config.cmd_addr_cycles)
        self.status_check_ns = self.cycles_time(self.config.status_check_cycles)
        self.page_transfer_ns = self.transfer_time(page_size)
        self._dists = {
            OpKind.READ: self.config.read_latency,
            OpKind.PROGRAM: self.config.program_latency,
            OpKind.ERASE: self.config.erase_latency,
        }

    def cycles_time(self, cycles: int) -> int:
        return _div_round(cycles * NS_PER_S, self.config.bus_freq_hz)

    def transfer_time(self, n_bytes: int) -> int:
        """Bus time in ns to move ``n_bytes``, rounded to the nearest ns."""
        if n_bytes < 0:
            raise ValueError("n_bytes must be >= 0")
        cfg = self.config
        return _div_round(n_bytes * 8 * NS_PER_S, cfg.bus_width_bits * cfg.bus_freq_hz)

    def sample_latency(self, op: OpKind, page: int, rng: random.Random) -> int:
        """Array latency for ``op``; ``page`` matters only in page-pair mode.

        Random-mixture mode always consumes one uniform draw for the mode
        choice, even for degenerate weights.
        """
        try:
            dist = self._dists[op]
        except KeyError:
            raise UnknownOp(op) from None
        if self.config.mlc_mode == MlcMode.PAGE_PAIR_DETERMINISTIC:
            base = dist.mode_a if page % 2 == 0 else dist.mode_b
        else:
            base = dist.mode_a if rng.random() < dist.weight_a else dist.mode_b
        return dist.jittered(base, rng)

    def phase_plan(self, kind: OpKind, page: int, rng: random.Random, owner: int = 0) -> list[Phase]:
        BUS, CHIP = Resource.BUS, Resource.CHIP
        if kind == OpKind.ERASE:
            return [
                Phase(PhaseKind.CMD_ADDR, self.cmd_addr_ns, BUS, owner),
                Phase(PhaseKind.ARRAY_BUSY, self.sample_latency(kind, page, rng), CHIP, owner),
                Phase(PhaseKind.STATUS_CHECK, self.status_check_ns, BUS, owner),
            ]
        if kind == OpKind.PROGRAM:
            return [
                Phase(PhaseKind.CMD_ADDR, self.cmd_addr_ns, BUS, owner),
                Phase(PhaseKind.DATA_IN, self.page_transfer_ns, BUS, owner),
                Phase(PhaseKind.ARRAY_BUSY, self.sample_latency(kind, page, rng), CHIP, owner),
                Phase(PhaseKind.STATUS_CHECK, self.status_check_ns, BUS, owner),
            ]
        if kind == OpKind.READ:
            return [
                Phase(PhaseKind.CMD_ADDR, self.cmd_addr_ns, BUS, owner),
                Phase(PhaseKind.ARRAY_BUSY, self.sample_latency(kind, page, rng), CHIP, owner),
                Phase(PhaseKind.DATA_OUT, self.page_transfer_ns, BUS, owner),
            ]
        raise UnknownOp(kind)
