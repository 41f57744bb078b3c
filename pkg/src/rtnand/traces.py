"""Line-oriented file formats and the synthetic workload generator.

All files start with a one-line ``# rtnand-<kind> v1`` header; fields are
space separated; further ``#`` lines and blank lines are ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
import random
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .flash_array import Geometry
from .timing import OpKind

TRACE_HEADER = "# rtnand-trace v1"
RESULT_HEADER = "# rtnand-result v1"
RELEASE_HEADER = "# rtnand-release v1"

_KIND_NAMES = {"read": OpKind.READ, "program": OpKind.PROGRAM, "erase": OpKind.ERASE}
_KIND_LABEL = {v: k for k, v in _KIND_NAMES.items()}


class ParseError(ValueError):
    pass


class BadSpec(ValueError):
    pass


class TraceLine(NamedTuple):
    t_issue: int
    kind: OpKind
    bus: int
    chip: int
    block: int
    page: int
    payload: str = "-"

    def format(self) -> str:
        return (f"{self.t_issue} {_KIND_LABEL[self.kind]} {self.bus} {self.chip} "
                f"{self.block} {self.page} {self.payload}")


class ResultLine(NamedTuple):
    id: int
    t_issue: int
    t_complete_sim: int | None
    wall_release: int | None
    status: str  # OK | Fail | Dropped

    def format(self) -> str:
        tc = "-" if self.t_complete_sim is None else str(self.t_complete_sim)
        wr = "-" if self.wall_release is None else str(self.wall_release)
        return f"{self.id} {self.t_issue} {tc} {wr} {self.status}"

    @property
    def completion(self) -> int | None:
        """Observed completion: the wall release in RT logs, the simulated time otherwise."""
        return self.wall_release if self.wall_release is not None else self.t_complete_sim


def _body(lines: Iterable[str], header: str, source: str):
    it = iter(lines)
    first = next(it, None)
    if first is None or first.strip() != header:
        raise ParseError(f"{source}: expected header {header!r}")
    for lineno, raw in enumerate(it, start=2):
        text = raw.strip()
        if text and not text.startswith("#"):
            yield lineno, text.split()


def _int(tok: str, source: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{source}:{lineno}: not an integer: {tok!r}") from None


# -- traces ------------------------------------------------------------------

def parse_trace(lines: Iterable[str], source: str = "<trace>") -> list[TraceLine]:
    out: list[TraceLine] = []
    last = 0
    for lineno, f in _body(lines, TRACE_HEADER, source):
        if len(f) not in (6, 7):
            raise ParseError(f"{source}:{lineno}: expected 6 or 7 fields, got {len(f)}")
        kind = _KIND_NAMES.get(f[1].lower())
        if kind is None:
            raise ParseError(f"{source}:{lineno}: unknown op {f[1]!r}")
        t = _int(f[0], source, lineno)
        if t < last:
            raise ParseError(f"{source}:{lineno}: t_issue decreases ({t} < {last})")
        last = t
        payload = f[6] if len(f) == 7 else "-"
        if kind == OpKind.PROGRAM and payload == "-":
            raise ParseError(f"{source}:{lineno}: program needs a payload")
        if kind != OpKind.PROGRAM and payload != "-":
            raise ParseError(f"{source}:{lineno}: only programs carry a payload")
        out.append(TraceLine(t, kind, *(_int(x, source, lineno) for x in f[2:6]), payload))
    return out


def read_trace(path: str | os.PathLike) -> list[TraceLine]:
    with open(path) as fh:
        return parse_trace(fh, str(path))


def format_trace(lines: Iterable[TraceLine]) -> str:
    body = "".join(line.format() + "\n" for line in lines)
    return f"{TRACE_HEADER}\n# t_issue kind bus chip block page payload\n{body}"


def write_trace(path: str | os.PathLike, lines: Iterable[TraceLine]) -> None:
    with open(path, "w") as fh:
        fh.write(format_trace(lines))


def materialize_payload(spec: str, page_size: int, base_dir: str | os.PathLike = ".") -> bytes:
    """Turn ``const:0xAB``, ``rand:<seed>`` or ``file:<path>`` into page bytes."""
    scheme, _, arg = spec.partition(":")
    if scheme == "const":
        value = int(arg, 0)
        if not 0 <= value <= 255:
            raise ParseError(f"constant byte out of range: {spec}")
        return bytes([value]) * page_size
    if scheme == "rand":
        return random.Random(int(arg)).randbytes(page_size)
    if scheme == "file":
        path = os.path.join(base_dir, arg)
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) != page_size:
            raise ParseError(f"{path}: payload is {len(data)} bytes, page is {page_size}")
        return data
    raise ParseError(f"unknown payload spec {spec!r}")


def check_geometry(lines: Iterable[TraceLine], geometry: Geometry) -> None:
    from .flash_array import GeometryMismatch

    g = geometry
    for i, ln in enumerate(lines):
        if not (0 <= ln.bus < g.buses and 0 <= ln.chip < g.chips_per_bus
                and 0 <= ln.block < g.blocks_per_chip and 0 <= ln.page < g.pages_per_block):
            raise GeometryMismatch(f"trace line {i} addresses ({ln.bus},{ln.chip},{ln.block},{ln.page}) "
                                   f"outside geometry {g.as_tuple()[:4]}")


# -- result / release logs ---------------------------------------------------

def format_results(results: Iterable[ResultLine]) -> str:
    body = "".join(r.format() + "\n" for r in results)
    return f"{RESULT_HEADER}\n# id t_issue t_complete_sim wall_release status\n{body}"


def parse_results(lines: Iterable[str], source: str = "<results>") -> list[ResultLine]:
    out = []
    for lineno, f in _body(lines, RESULT_HEADER, source):
        if len(f) != 5:
            raise ParseError(f"{source}:{lineno}: expected 5 fields")
        tc = None if f[2] == "-" else _int(f[2], source, lineno)
        wr = None if f[3] == "-" else _int(f[3], source, lineno)
        if f[4] not in ("OK", "Fail", "Dropped"):
            raise ParseError(f"{source}:{lineno}: bad status {f[4]!r}")
        out.append(ResultLine(_int(f[0], source, lineno), _int(f[1], source, lineno), tc, wr, f[4]))
    return out


def read_results(path: str | os.PathLike) -> list[ResultLine]:
    with open(path) as fh:
        return parse_results(fh, str(path))


def format_release_log(lines: Iterable[str]) -> str:
    body = "".join(line + "\n" for line in lines)
    return f"{RELEASE_HEADER}\n# id sim_completion wall_target wall_actual lateness_ns overrun\n{body}"


def parse_pf_schedule(lines: Iterable[str], source: str = "<pf>") -> list[int]:
    """One simulated time (ns) per line; ``#`` comments allowed."""
    out = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            t = _int(text, source, lineno)
            if t < 0:
                raise ParseError(f"{source}:{lineno}: negative time")
            out.append(t)
    return sorted(out)


def read_pf_schedule(path: str | os.PathLike) -> list[int]:
    with open(path) as fh:
        return parse_pf_schedule(fh, str(path))


# -- workload generator ------------------------------------------------------

@dataclass(frozen=True)
class WorkloadSpec:
    """Synthetic workload. Defaults (70/25/5 mix, bursts of 8) are arbitrary."""

    count: int = 1000
    mix: tuple[float, float, float] = (0.70, 0.25, 0.05)  # read, program, erase
    queue_depth: int = 8
    interarrival: str = "exponential"  # exponential | fixed
    interarrival_mean_ns: int = 1_000_000
    start_ns: int = 0
    address: str = "uniform"  # uniform | sequential
    blocks: int | None = None  # restrict to the first N blocks of each chip
    pages: int | None = None  # restrict to the first N pages of each block
    payload: str = "rand"  # rand | const
    geometry: Geometry = field(default_factory=Geometry)

    def __post_init__(self):
        if self.count < 0:
            raise BadSpec("count must be >= 0")
        if len(self.mix) != 3 or any(m < 0 for m in self.mix) or not math.isclose(sum(self.mix), 1.0):
            raise BadSpec("mix needs three non-negative weights summing to 1")
        if self.queue_depth < 1:
            raise BadSpec("queue_depth must be >= 1")
        if self.interarrival not in ("exponential", "fixed"):
            raise BadSpec("interarrival must be exponential or fixed")
        if self.interarrival_mean_ns < 0 or self.start_ns < 0:
            raise BadSpec("times must be >= 0")
        if self.address not in ("uniform", "sequential"):
            raise BadSpec("address must be uniform or sequential")
        if self.payload not in ("rand", "const"):
            raise BadSpec("payload must be rand or const")
        g = self.geometry
        if self.blocks is not None and not 1 <= self.blocks <= g.blocks_per_chip:
            raise BadSpec("blocks outside geometry")
        if self.pages is not None and not 1 <= self.pages <= g.pages_per_block:
            raise BadSpec("pages outside geometry")


def parse_workload(text: str) -> WorkloadSpec:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise BadSpec(str(exc)) from None
    if not cp.has_section("workload"):
        raise BadSpec("missing [workload] section")
    kw: dict = {}
    known = {f.name for f in dataclasses.fields(WorkloadSpec)} - {"geometry"}
    for key, raw in cp["workload"].items():
        if key not in known:
            raise BadSpec(f"unknown workload key {key!r}")
        try:
            if key == "mix":
                kw[key] = tuple(float(x) for x in raw.replace(",", " ").split())
            elif key in ("interarrival", "address", "payload"):
                kw[key] = raw.strip()
            else:
                kw[key] = int(raw)
        except ValueError:
            raise BadSpec(f"{key} = {raw!r} is not valid") from None
    if cp.has_section("geometry"):
        try:
            kw["geometry"] = Geometry(**{k: int(v) for k, v in cp["geometry"].items()})
        except (TypeError, ValueError) as exc:
            raise BadSpec(f"[geometry] {exc}") from None
    try:
        return WorkloadSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise BadSpec(str(exc)) from None


def gen_trace(spec: WorkloadSpec, seed: int) -> list[TraceLine]:
    rng = random.Random(f"gen:{seed}")
    g = spec.geometry
    n_blocks = spec.blocks or g.blocks_per_chip
    n_pages = spec.pages or g.pages_per_block
    kinds = (OpKind.READ, OpKind.PROGRAM, OpKind.ERASE)
    cum = [spec.mix[0], spec.mix[0] + spec.mix[1], 1.0]
    out = []
    t = spec.start_ns
    seq_cursor = 0
    for i in range(spec.count):
        if i and i % spec.queue_depth == 0:
            if spec.interarrival == "fixed":
                t += spec.interarrival_mean_ns
            else:
                t += round(rng.expovariate(1.0 / spec.interarrival_mean_ns)) if spec.interarrival_mean_ns else 0
        u = rng.random()
        kind = kinds[0] if u < cum[0] else kinds[1] if u < cum[1] else kinds[2]
        if spec.address == "uniform":
            bus = rng.randrange(g.buses)
            chip = rng.randrange(g.chips_per_bus)
            block = rng.randrange(n_blocks)
            page = rng.randrange(n_pages)
        else:
            # Stripe consecutive requests across chips, then pages, then blocks.
            c = seq_cursor % g.n_chips
            rest = seq_cursor // g.n_chips
            bus, chip = divmod(c, g.chips_per_bus)
            page = rest % n_pages
            block = (rest // n_pages) % n_blocks
            seq_cursor += 1
        if kind == OpKind.PROGRAM:
            payload = f"rand:{rng.getrandbits(32)}" if spec.payload == "rand" else f"const:{rng.randrange(256):#04x}"
        else:
            payload = "-"
        out.append(TraceLine(t, kind, bus, chip, block, 0 if kind == OpKind.ERASE else page, payload))
    return out
