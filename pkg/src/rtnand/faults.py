"""Abstract fault model: internal faults, power-failure outcomes, corruption.

Every page carries one of four abstract states. Faulty operations move the
target page(s) to a state drawn from configurable weights, which is the
weakest-assumption reading of the per-page nondeterministic state machine:
any outcome the weights allow may happen.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import IntEnum

from .flash_array import FlashArray, PageAddress, PageState
from .timing import OpKind

ALL_STATES = (
    PageState.ERASED_PROGRAMMABLE,
    PageState.ERASED_NOT_PROGRAMMABLE,
    PageState.PROGRAMMED_DATA_OK,
    PageState.PROGRAMMED_DATA_NOT_OK,
)
ERASE_FAIL_STATES = (PageState.ERASED_NOT_PROGRAMMABLE, PageState.PROGRAMMED_DATA_NOT_OK)


class FaultKind(IntEnum):
    INTERNAL_FAULT = 0
    POWER_FAILURE = 1


class PreconditionViolated(Exception):
    pass


def _check_weights(name: str, weights: tuple[float, ...], n: int) -> None:
    if len(weights) != n:
        raise ValueError(f"{name} needs {n} weights, got {len(weights)}")
    if any(w < 0 or w > 1 for w in weights):
        raise ValueError(f"{name} weights must lie in [0, 1]")
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise ValueError(f"{name} weights must sum to 1")


@dataclass(frozen=True)
class FaultConfig:
    p_erase_internal: float = 0.0
    p_program_internal: float = 0.0
    program_bitdiff_threshold: int = 8
    pf_program_weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    pf_erase_weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    erase_if_weights: tuple[float, float] = (0.5, 0.5)
    corrupt_min_flips: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_erase_internal", "p_program_internal"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        _check_weights("pf_program_weights", tuple(self.pf_program_weights), 4)
        _check_weights("pf_erase_weights", tuple(self.pf_erase_weights), 4)
        _check_weights("erase_if_weights", tuple(self.erase_if_weights), 2)
        if self.program_bitdiff_threshold < 0:
            raise ValueError("program_bitdiff_threshold must be >= 0")
        if self.corrupt_min_flips <= self.program_bitdiff_threshold:
            raise ValueError("corrupt_min_flips must exceed program_bitdiff_threshold")


def _pick(rng: random.Random, states, weights) -> PageState:
    # One uniform draw per pick keeps replay independent of weight values.
    u = rng.random()
    acc = 0.0
    for state, w in zip(states, weights):
        acc += w
        if u < acc:
            return state
    # fsum rounding may leave u just above acc; fall back to the last non-zero weight.
    for state, w in zip(reversed(states), reversed(weights)):
        if w > 0:
            return state
    return states[-1]


class FaultEngine:
    def __init__(self, config: FaultConfig | None = None, array: FlashArray | None = None):
        self.config = config or FaultConfig()
        self.array = array

    def roll_internal_fault(self, op: OpKind, rng: random.Random) -> bool:
        if op == OpKind.ERASE:
            p = self.config.p_erase_internal
        elif op == OpKind.PROGRAM:
            p = self.config.p_program_internal
        else:
            raise ValueError(f"internal faults apply to erase/program, not {op!r}")
        return rng.random() < p

    def corrupt(self, data: bytes, rng: random.Random) -> bytes:
        """Flip k distinct bits, k uniform in [corrupt_min_flips, 2*corrupt_min_flips]."""
        lo = self.config.corrupt_min_flips
        nbits = len(data) * 8
        if lo > nbits:
            raise ValueError(f"cannot flip {lo} bits in a {len(data)}-byte buffer")
        k = rng.randint(lo, min(2 * lo, nbits))
        out = bytearray(data)
        for pos in rng.sample(range(nbits), k):
            out[pos >> 3] ^= 1 << (pos & 7)
        return bytes(out)

    def apply_program_outcome(self, addr: PageAddress, intended_data: bytes, internal_fault: bool,
                              power_failure: bool, rng: random.Random) -> PageState:
        array = self.array
        if internal_fault and power_failure:
            raise PreconditionViolated("power failure preempts the status check")
        if array.page_state(addr) != PageState.ERASED_PROGRAMMABLE:
            raise PreconditionViolated(f"page {addr} is not programmable")
        if power_failure:
            state = _pick(rng, ALL_STATES, self.config.pf_program_weights)
        elif internal_fault:
            state = PageState.PROGRAMMED_DATA_NOT_OK
        else:
            array.commit_program(addr, intended_data)
            return PageState.PROGRAMMED_DATA_OK
        if state == PageState.PROGRAMMED_DATA_OK:
            array.commit_program(addr, intended_data)
        elif state == PageState.PROGRAMMED_DATA_NOT_OK:
            array.set_state(addr, state, self.corrupt(intended_data, rng))
        else:
            array.set_state(addr, state)
        return state

    def apply_erase_outcome(self, addr: PageAddress, internal_fault: bool, power_failure: bool,
                            rng: random.Random) -> list[PageState]:
        array = self.array
        g = array.geometry
        g.check(PageAddress(addr[0], addr[1], addr[2], 0))
        if internal_fault and power_failure:
            raise PreconditionViolated("power failure preempts the status check")
        if not internal_fault and not power_failure:
            array.commit_erase(addr)
            return [PageState.ERASED_PROGRAMMABLE] * g.pages_per_block
        cfg = self.config
        states = []
        for page in range(g.pages_per_block):
            paddr = PageAddress(addr[0], addr[1], addr[2], page)
            if power_failure:
                state = _pick(rng, ALL_STATES, cfg.pf_erase_weights)
            else:
                state = _pick(rng, ERASE_FAIL_STATES, cfg.erase_if_weights)
            if state == PageState.PROGRAMMED_DATA_OK:
                # Interrupted erase left the previous contents intact.
                prev, _ = array.read_page(paddr)
                array.set_state(paddr, state, prev)
            elif state == PageState.PROGRAMMED_DATA_NOT_OK:
                # Stuck-at-0 bits on a failed erase; a half-erased page after power loss.
                base = array.erased_page if internal_fault else array.read_page(paddr)[0]
                array.set_state(paddr, state, self.corrupt(base, rng))
            else:
                array.set_state(paddr, state)
            states.append(state)
        return states
