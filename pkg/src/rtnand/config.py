"""Sectioned key/value configuration ([geometry], [timing], [fault], [controller], [realtime])."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .controller import ControllerConfig
from .faults import FaultConfig
from .flash_array import Geometry
from .timing import LatencyDist, MlcMode, TimingConfig


class ConfigError(ValueError):
    pass


def usable_cpus() -> int:
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RealtimeConfig:
    spin: str = "auto"  # busy | hybrid | auto
    sleep_margin_ns: int = 100_000
    switch_interval_us: float = 200.0
    calibration_ns: int = 20_000_000
    overrun_tolerance_ns: int = 50_000

    def __post_init__(self):
        if self.spin not in ("busy", "hybrid", "auto"):
            raise ValueError("spin must be 'busy', 'hybrid' or 'auto'")

    @property
    def hybrid(self) -> bool:
        # Pure spinning needs a core each for the loop, executor and aligner threads.
        if self.spin == "auto":
            return usable_cpus() < 3
        return self.spin == "hybrid"


@dataclass(frozen=True)
class SimConfig:
    geometry: Geometry = field(default_factory=Geometry)
    timing: TimingConfig = field(default_factory=TimingConfig)
    fault: FaultConfig = field(default_factory=FaultConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    realtime: RealtimeConfig = field(default_factory=RealtimeConfig)

    def replace(self, **sections) -> "SimConfig":
        return dataclasses.replace(self, **sections)


_MLC_NAMES = {"random_mixture": MlcMode.RANDOM_MIXTURE, "page_pair": MlcMode.PAGE_PAIR_DETERMINISTIC}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _section(cp: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(cp[name]) if cp.has_section(name) else {}


def _build(cls, values: dict, converters: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, raw in values.items():
        conv = converters.get(key, int)
        try:
            kwargs[key] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{where}] {key} = {raw!r}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def _timing(values: dict[str, str]) -> TimingConfig:
    base = TimingConfig()
    dists = {}
    for op in ("read", "program", "erase"):
        prefix = f"{op}_latency_"
        d = getattr(base, f"{op}_latency")
        parts = {k[len(prefix):]: values.pop(k) for k in list(values) if k.startswith(prefix)}
        if parts:
            kw = dataclasses.asdict(d)
            for k, v in parts.items():
                if k not in kw:
                    raise ConfigError(f"[timing] unknown key {prefix}{k}")
                kw[k] = float(v) if k in ("weight_a", "jitter_sigma") else int(v)
            try:
                d = LatencyDist(**kw)
            except ValueError as exc:
                raise ConfigError(f"[timing] {op} latency: {exc}") from None
        dists[f"{op}_latency"] = d
    mlc = values.pop("mlc_mode", None)
    t = _build(TimingConfig, values, {}, "timing")
    kw = dict(dists)
    if mlc is not None:
        if mlc not in _MLC_NAMES:
            raise ConfigError(f"[timing] mlc_mode must be one of {sorted(_MLC_NAMES)}")
        kw["mlc_mode"] = _MLC_NAMES[mlc]
    return dataclasses.replace(t, **kw)


def parse_config(text: str) -> SimConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    extra = set(cp.sections()) - {"geometry", "timing", "fault", "controller", "realtime"}
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")
    fault_conv = {
        "p_erase_internal": float,
        "p_program_internal": float,
        "pf_program_weights": _floats,
        "pf_erase_weights": _floats,
        "erase_if_weights": _floats,
    }
    rt_conv = {"spin": str.strip, "switch_interval_us": float}
    return SimConfig(
        geometry=_build(Geometry, _section(cp, "geometry"), {}, "geometry"),
        timing=_timing(_section(cp, "timing")),
        fault=_build(FaultConfig, _section(cp, "fault"), fault_conv, "fault"),
        controller=_build(ControllerConfig, _section(cp, "controller"), {}, "controller"),
        realtime=_build(RealtimeConfig, _section(cp, "realtime"), rt_conv, "realtime"),
    )


def load_config(path: str | os.PathLike) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_to_ini(cfg: SimConfig) -> str:
    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(repr(x) for x in v)
        return str(v)

    lines = ["[geometry]"]
    lines += [f"{k} = {v}" for k, v in dataclasses.asdict(cfg.geometry).items()]
    lines += ["", "[timing]"]
    t = cfg.timing
    for k in ("bus_width_bits", "bus_freq_hz", "cmd_addr_cycles", "status_check_cycles"):
        lines.append(f"{k} = {getattr(t, k)}")
    lines.append("mlc_mode = " + {v: k for k, v in _MLC_NAMES.items()}[t.mlc_mode])
    for op in ("read", "program", "erase"):
        for k, v in dataclasses.asdict(getattr(t, f"{op}_latency")).items():
            lines.append(f"{op}_latency_{k} = {v}")
    lines += ["", "[fault]"]
    lines += [f"{k} = {fmt(v)}" for k, v in dataclasses.asdict(cfg.fault).items()]
    lines += ["", "[controller]"]
    lines += [f"{k} = {v}" for k, v in dataclasses.asdict(cfg.controller).items()]
    lines += ["", "[realtime]"]
    lines += [f"{k} = {v}" for k, v in dataclasses.asdict(cfg.realtime).items()]
    return "\n".join(lines) + "\n"
