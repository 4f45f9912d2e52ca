"""Command-line interface: ``stacksim op|tran|scenario|compare-leakage|plot``.

Exit codes: 0 success, 1 usage, 2 parse/validation, 3 solver failure,
4 functional-check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .builders import CONVENTIONAL, PROPOSED, CellConfig
from .engine import SimulationError, SolverConfig, dc_operating_point, transient
from .export import read_csv, write_csv, write_svg
from .netlist import NetlistError, parse_netlist, serialize_netlist
from .power import HOLD_DT, build_column, compare_leakage, sci_json
from .protocol import (LOWER, UPPER, CellSelect, decode_address, run_scenario,
                       sequence_hold, sequence_read, sequence_write)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4
SCENARIO_DT = 1e-11


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    cell: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    fingerprint: str = ""
    wall_clock_s: float = 0.0

    def write(self, output: Path) -> Path:
        path = output.with_name(output.name + ".manifest.json")
        data = {"command": self.command, "inputs": self.inputs, "solver_config": self.solver,
                "cell_config": self.cell, "outputs": self.outputs,
                "config_fingerprint": self.fingerprint, "wall_clock_s": self.wall_clock_s}
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _sha(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def format_number(x: float) -> str:
    """Six significant digits with a bare exponent, e.g. ``5.00000e-1``."""
    mant, exp = f"{x:.5e}".split("e")
    return f"{mant}e{int(exp)}"


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    return parse_netlist(text), text


def _positive(name, value):
    if value is not None and not value > 0:
        raise UsageError(f"{name} must be positive")


def cmd_op(args) -> int:
    netlist, text = _load(args.netlist)
    op = dc_operating_point(netlist, SolverConfig())
    width = max([len(n) for n in op.voltages] + [len(n) for n in op.currents] + [4])
    print(f"{'node':<{width}} value")
    for name, v in op.voltages.items():
        if name != "0":
            print(f"{name:<{width}} {format_number(v)}")
    for name, i in op.currents.items():
        print(f"{name:<{width}} {format_number(i)}")
    return EXIT_OK


def cmd_tran(args) -> int:
    netlist, text = _load(args.netlist)
    dt, tstop = netlist.tran if netlist.tran else (None, None)
    dt = args.dt if args.dt is not None else dt
    tstop = args.tstop if args.tstop is not None else tstop
    if dt is None or tstop is None:
        raise UsageError("--tstop and --dt are required when the netlist has no .tran")
    _positive("--tstop", tstop)
    _positive("--dt", dt)
    if dt > tstop:
        raise UsageError("--dt must not exceed --tstop")
    cfg = SolverConfig(dt=dt, tstop=tstop, integrator=args.integrator)
    started = time.perf_counter()
    w = transient(netlist, cfg)
    out = write_csv(w, args.out)
    RunManifest("tran", [args.netlist], cfg.as_dict(), {}, [str(out)],
                _sha(serialize_netlist(netlist), json.dumps(cfg.as_dict(), sort_keys=True)),
                time.perf_counter() - started).write(out)
    print(f"wrote {out} ({len(w.time)} points)")
    return EXIT_OK


def _select(arch, cell):
    if cell in (UPPER, LOWER):
        if arch != PROPOSED:
            raise UsageError("--cell upper/lower applies to the proposed column only")
        return CellSelect(cell)
    try:
        addr = int(cell)
    except ValueError:
        raise UsageError(f"--cell must be an integer, 'upper' or 'lower', got {cell!r}") from None
    if arch == CONVENTIONAL:
        return CellSelect(addr)
    return CellSelect(UPPER if addr % 2 == 0 else LOWER, addr // 2)


def cmd_scenario(args) -> int:
    if args.op == "write" and args.bit is None:
        raise UsageError("--op write needs --bit")
    if args.op != "write" and args.bit is not None:
        raise UsageError("--bit is only valid with --op write")
    _positive("--hold-time", args.hold_time)
    cell_cfg = CellConfig(vdd=args.vdd)
    n_bits = 2
    netlist, sig = build_column(args.arch, cell_cfg, n_bits)
    if args.op == "hold":
        schedule = sequence_hold(sig, args.hold_time)
        dt = args.dt or HOLD_DT
        addr = 0
    else:
        sel = _select(args.arch, args.cell)
        try:
            addr = sel.address(sig)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.op == "write":
            schedule = sequence_write(sig, sel, args.bit).then(
                sequence_read(sig, sel, expected_bit=args.bit))
        else:
            stored = 1 if netlist.initial_map[sig.cell(addr).q] > netlist.initial_map[sig.cell(addr).qb] else 0
            schedule = sequence_read(sig, sel, expected_bit=stored)
        dt = args.dt or SCENARIO_DT
    cfg = SolverConfig(dt=dt, tstop=schedule.duration)
    started = time.perf_counter()
    result = run_scenario(netlist, sig, schedule, cfg)
    sel_info = decode_address(sig, addr)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    signals = [sel_info.sense_output, *sig.word_lines, sig.data, *sig.data_enables,
               *sig.precharge_enables]
    for pair in sig.bit_lines:
        signals.extend(pair)
    for c in sig.cells:
        signals.extend([c.q, c.qb])
    signals += sorted(n for n in result.waveform.names if n.startswith("mid"))
    csv_path = write_csv(result.waveform, outdir / "waveform.csv", signals)
    json_path = outdir / "checks.json"
    json_path.write_text(result.to_json(csv_path.name), encoding="utf-8")
    fp = _sha(serialize_netlist(netlist), json.dumps(cfg.as_dict(), sort_keys=True), schedule.name)
    elapsed = time.perf_counter() - started
    for out in (csv_path, json_path):
        RunManifest("scenario", [], cfg.as_dict(), cell_cfg.as_dict(),
                    [str(csv_path), str(json_path)], fp, elapsed).write(out)
    failed = [c for c in result.checks if not c.passed]
    print(f"{result.name} on {args.arch}: {len(result.checks) - len(failed)}/"
          f"{len(result.checks)} checks passed")
    for c in failed:
        print(f"FAIL {c.name} at {c.time:.4g} s: measured {c.measured:.6g} V, "
              f"expected {c.expected:.6g} V")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_compare(args) -> int:
    _positive("--hold-time", args.hold_time)
    _positive("--dt", args.dt)
    if args.dt > args.hold_time:
        raise UsageError("--dt must not exceed --hold-time")
    if args.bits is not None:
        bits = [int(b) for b in args.bits]
        if any(b not in (0, 1) for b in bits) or len(bits) < 2 or len(bits) % 2:
            raise UsageError("--bits must be an even-length string of 0/1")
    else:
        bits = None
    cell_cfg = CellConfig(vdd=args.vdd)
    started = time.perf_counter()
    n_bits = len(bits) if bits else args.n_bits
    if n_bits < 2 or n_bits % 2:
        raise UsageError("--n-bits must be even and >= 2")
    report = compare_leakage(cell_cfg, args.hold_time, args.dt, n_bits=n_bits, init_bits=bits)
    out = Path(args.out)
    out.write_text(report.to_json(), encoding="utf-8")
    RunManifest("compare-leakage", [], {"hold_time": args.hold_time, "dt": args.dt},
                cell_cfg.as_dict(), [str(out)], report.fingerprint,
                time.perf_counter() - started).write(out)
    print(f"ratio {report.ratio:.6f}")
    print(f"savings {report.savings_percent:.3f} %")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        w = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from None
    signals = [s for s in args.signals.split(",") if s] if args.signals else w.names
    missing = [s for s in signals if s not in w]
    if missing:
        raise UsageError(f"unknown signal(s) {', '.join(missing)}; "
                         f"available: {', '.join(w.names)}")
    out = write_svg(w, signals, args.out, title=Path(args.csv).name)
    RunManifest("plot", [args.csv], {}, {}, [str(out)],
                _sha(Path(args.csv).read_text(encoding="utf-8"), ",".join(signals)),
                0.0).write(out)
    print(f"wrote {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stacksim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("op", help="DC operating point of a netlist")
    s.add_argument("netlist")
    s.set_defaults(func=cmd_op)

    s = sub.add_parser("tran", help="transient analysis to CSV")
    s.add_argument("netlist")
    s.add_argument("--tstop", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--integrator", choices=["trapezoidal", "backward-euler"],
                   default="trapezoidal")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tran)

    s = sub.add_parser("scenario", help="read/write/hold on a generated column")
    s.add_argument("--arch", choices=[CONVENTIONAL, PROPOSED], required=True)
    s.add_argument("--op", choices=["read", "write", "hold"], required=True)
    s.add_argument("--cell", default="0")
    s.add_argument("--bit", type=int, choices=[0, 1])
    s.add_argument("--hold-time", type=float, default=1e-6)
    s.add_argument("--dt", type=float)
    s.add_argument("--vdd", type=float, default=1.2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("compare-leakage", help="hold leakage per bit, both columns")
    s.add_argument("--hold-time", type=float, default=1e-6)
    s.add_argument("--dt", type=float, default=HOLD_DT)
    s.add_argument("--n-bits", type=int, default=2)
    s.add_argument("--bits", help="stored data, e.g. 0000 (default all zeros)")
    s.add_argument("--vdd", type=float, default=1.2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("plot", help="SVG plot of a waveform CSV")
    s.add_argument("csv")
    s.add_argument("--signals", help="comma-separated names (default: all)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"stacksim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NetlistError as exc:
        for d in exc.diagnostics:
            print(str(d), file=sys.stderr)
        return EXIT_PARSE
    except SimulationError as exc:
        print(f"stacksim: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"stacksim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
