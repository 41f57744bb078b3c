"""``rtnand`` command line: run, compare, gen-trace, fault-campaign, default-config."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .campaign import BadStrategy, PfStrategy, fault_campaign
from .config import ConfigError, SimConfig, config_to_ini, load_config
from .flash_array import FlashArrayError, GeometryMismatch
from .harness import IdMismatch, compare, replay
from .simulator import Mode
from .traces import (BadSpec, ParseError, format_release_log, format_results, format_trace, gen_trace,
                     parse_workload, read_pf_schedule, read_results, read_trace)

EXPECTED = (ParseError, BadSpec, ConfigError, GeometryMismatch, FlashArrayError, IdMismatch, BadStrategy,
            OSError, ValueError)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _load(path: str | None) -> SimConfig:
    return load_config(path) if path else SimConfig()


def response_csv(results) -> str:
    rows = ["id,t_issue,t_complete,response_ns,status"]
    for r in results:
        done = r.completion
        resp = "" if done is None else str(done - r.t_issue)
        rows.append(f"{r.id},{r.t_issue},{'' if done is None else done},{resp},{r.status}")
    return "\n".join(rows) + "\n"


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.spin:
        cfg = cfg.replace(realtime=dataclasses.replace(cfg.realtime, spin=args.spin))
    trace = read_trace(args.trace)
    pf = read_pf_schedule(args.pf_schedule) if args.pf_schedule else []
    out = replay(cfg, trace, mode=args.mode, seed=args.seed, pf_times=pf,
                 record_events=bool(args.events), base_dir=os.path.dirname(os.path.abspath(args.trace)))
    _write(args.out, format_results(out.results))
    if args.mode == Mode.RT.value:
        release = args.release_log or (args.out + ".release" if args.out != "-" else None)
        if release:
            _write(release, format_release_log(out.release_lines))
        if out.report is not None:
            for line in out.report.lines():
                print(line, file=sys.stderr)
    if args.events:
        _write(args.events, "".join(line + "\n" for line in out.sim.event_log_lines()))
    if args.csv:
        _write(args.csv, response_csv(out.results))
    if args.snapshot:
        out.array.snapshot(args.snapshot)
    counts = {s: sum(1 for r in out.results if r.status == s) for s in ("OK", "Fail", "Dropped")}
    print(f"{len(out.results)} requests: {counts['OK']} OK, {counts['Fail']} Fail, {counts['Dropped']} Dropped; "
          f"{out.power_failures} power failures", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    summary = compare(read_results(args.a), read_results(args.b))
    _write(args.out, summary.csv())
    print(f"compared {summary.count} requests ({summary.skipped} skipped): "
          f"mean {summary.mean_pct:.4f}% max {summary.max_pct:.4f}%")
    return 0


def cmd_gen_trace(args) -> int:
    with open(args.spec) as fh:
        spec = parse_workload(fh.read())
    _write(args.out, format_trace(gen_trace(spec, args.seed)))
    return 0


def cmd_fault_campaign(args) -> int:
    cfg = _load(args.config)
    report = fault_campaign(cfg, read_trace(args.trace), args.runs, args.seed, PfStrategy.parse(args.pf_strategy))
    _write(args.out, json.dumps(report, indent=2) + "\n")
    t = report["totals"]
    print(f"{args.runs} runs: {t['internal_faults']} internal faults, {t['power_failures']} power failures, "
          f"{t['dropped']} dropped, {t['violations']} invariant violations", file=sys.stderr)
    return 1 if t["violations"] else 0


def cmd_default_config(args) -> int:
    _write(args.out, config_to_ini(SimConfig()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtnand", description="Real-time NAND flash simulator and test harness.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="replay a trace and write the result log")
    r.add_argument("--config", help="INI configuration (defaults if omitted)")
    r.add_argument("--trace", required=True)
    r.add_argument("--mode", choices=[m.value for m in Mode], default="vt")
    r.add_argument("--pf-schedule", help="file with one power-failure time (ns) per line")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="result log ('-' for stdout)")
    r.add_argument("--release-log", help="RT release log (default: <out>.release)")
    r.add_argument("--events", help="write the processed event log here")
    r.add_argument("--csv", help="write per-request response times as CSV")
    r.add_argument("--snapshot", help="write the final array contents to this file")
    r.add_argument("--spin", choices=["busy", "hybrid", "auto"], help="override [realtime] spin")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="per-request completion deviation between two result logs")
    c.add_argument("a")
    c.add_argument("b", help="reference log (denominator)")
    c.add_argument("--out", required=True, help="per-request CSV")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen-trace", help="generate a synthetic trace from a workload spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_trace)

    f = sub.add_parser("fault-campaign", help="repeated replays with faults and power failures")
    f.add_argument("--config")
    f.add_argument("--trace", required=True)
    f.add_argument("--runs", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="JSON report")
    f.add_argument("--pf-strategy", default="none", help="none | fixed:T1,T2 | uniform:K")
    f.set_defaults(func=cmd_fault_campaign)

    d = sub.add_parser("default-config", help="print the default configuration")
    d.add_argument("--out", default="-")
    d.set_defaults(func=cmd_default_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EXPECTED as exc:
        print(f"rtnand {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


__all__ = ["main", "build_parser"]
