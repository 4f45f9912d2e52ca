"""Acceptance criteria, one test each.

Every test reports a PASS/FAIL line in the ``acceptance criteria`` section of
the pytest terminal summary.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from stacksim.builders import CellConfig, build_conventional_column, build_proposed_column
from stacksim.cli import main
from stacksim.devices import (DEFAULT_NMOS, DEFAULT_PMOS, mos_conductances, mos_current,
                              stack_leakage)
from stacksim.engine import SolverConfig, dc_operating_point
from stacksim.netlist import diagnose, parse_netlist, serialize_netlist
from stacksim.power import compare_leakage
from stacksim.protocol import (LOWER, UPPER, CellSelect, run_scenario, sequence_hold,
                               sequence_read, sequence_write)

from oracles import bisect, nmos_current, stack_by_shooting
from test_engine import RC, TAU, rc_error
from test_netlist import DATA, corpus

CFG = CellConfig()
# frozen once the bisection oracle agreed with the solver
STACK_RATIO = 0.17472671674851808


def test_1_solver_oracles(criterion):
    with criterion(1, "solver oracle equivalence") as c:
        t0 = time.perf_counter()
        op = dc_operating_point(parse_netlist("t\nV1 in 0 DC 1.0\nR1 in out 1k\nR2 out 0 1k\n.end\n"))
        t_div = time.perf_counter() - t0
        err_div = abs(op["out"] - 0.5)

        t0 = time.perf_counter()
        op = dc_operating_point(parse_netlist(
            "t\n.model nch nmos\nV1 top 0 DC 1.2\nR1 top d 1meg\nM1 d d 0 0 nch\n.end\n"))
        t_diode = time.perf_counter() - t0
        ref = bisect(lambda v: (1.2 - v) / 1e6 - nmos_current(v, v, 0.0, 0.0) - 1e-12 * v, 0.0, 1.2)
        err_diode = abs(op["d"] - ref)
        c.detail = (f"divider err {err_div:.1e} V ({t_div:.3f} s), "
                    f"diode err {err_diode:.1e} V ({t_diode:.3f} s)")
        assert err_div < 1e-9 and t_div < 1.0
        assert err_diode < 1e-6 and t_diode < 1.0


def test_2_transient_accuracy(criterion):
    with criterion(2, "transient accuracy and order") as c:
        _, e1 = rc_error(TAU / 100)
        _, e2 = rc_error(TAU / 200)
        c.detail = f"max err {e1:.2e} of 1 V step, halving dt gains {e1 / e2:.2f}x"
        assert e1 < 5e-3
        assert e1 / e2 >= 3.5


def test_3_device_derivatives(criterion):
    with criterion(3, "device-model derivatives and subthreshold slope") as c:
        rng = np.random.default_rng(2024)
        worst, points = 0.0, 0
        h = 1e-6
        for p in (DEFAULT_NMOS, DEFAULT_PMOS):
            for _ in range(100):
                bias = rng.uniform(-1.5, 3.0, size=4)
                if abs(bias[1] - bias[2]) < 1e-3:
                    continue  # |v_ds| kink
                points += 1
                for k, g in enumerate(mos_conductances(p, *bias)):
                    up, dn = bias.copy(), bias.copy()
                    up[k] += h
                    dn[k] -= h
                    fd = (mos_current(p, *up) - mos_current(p, *dn)) / (2 * h)
                    scale = max(abs(fd), abs(g))
                    if scale > 1e-16:
                        worst = max(worst, abs(g - fd) / scale)
        vg = np.linspace(-0.2, -0.1, 11)
        slope = np.polyfit(vg, np.log(mos_current(DEFAULT_NMOS, vg, 1.2, 0.0, 0.0)), 1)[0]
        target = 1.0 / (DEFAULT_NMOS.n_slope * DEFAULT_NMOS.temp_vt)
        c.detail = (f"worst rel err {worst:.1e} over {points} points, "
                    f"slope/target {slope / target:.4f}")
        assert points >= 100 and worst < 1e-4
        assert abs(slope / target - 1) < 0.02


def test_4_stacking_effect(criterion):
    with criterion(4, "device-level stacking effect") as c:
        i1 = stack_leakage(DEFAULT_NMOS, 1, 1.2)[0]
        i2 = stack_leakage(DEFAULT_NMOS, 2, 1.2)[0]
        ratio = i2 / i1
        oracle = stack_by_shooting(2, 1.2)[0] / stack_by_shooting(1, 1.2)[0]
        c.detail = f"stack(2)/stack(1) = {ratio:.6f}, oracle {oracle:.6f}"
        assert ratio < 1
        assert ratio == pytest.approx(oracle, rel=1e-9)
        assert ratio == pytest.approx(STACK_RATIO, rel=1e-9)


def _combos():
    for arch, builder, n, cells in (("conventional", build_conventional_column, 2, (0, 1)),
                                    ("proposed", build_proposed_column, 1, (UPPER, LOWER))):
        for cell in cells:
            for bit in (0, 1):
                yield arch, builder, n, cell, bit


def test_5_functional_protocol(criterion):
    with criterion(5, "functional protocol suite") as c:
        fast = SolverConfig(dt=1e-11)
        failures, combos, clean, worst_read = [], 0, 0, 0.0
        for arch, builder, n, cell, bit in _combos():
            netlist, sig = builder(CFG, n)
            sel = CellSelect(cell)
            read = sequence_read(sig, sel, expected_bit=bit)
            res = run_scenario(netlist, sig, sequence_write(sig, sel, bit).then(read), fast)
            combos += 1
            clean += res.passed
            failures += [f"{arch}/{cell}/{bit}: {r.name}" for r in res.checks if not r.passed]
            worst_read = max([worst_read] + [abs(r.measured - r.expected) for r in res.checks
                                             if r.name.startswith("read disturb")])
        worst_hold = 0.0
        for builder, n in ((build_conventional_column, 2), (build_proposed_column, 1)):
            netlist, sig = builder(CFG, n)
            res = run_scenario(netlist, sig, sequence_hold(sig, 1e-6), SolverConfig(dt=1e-9))
            failures += [f"hold {sig.arch}: {r.name}" for r in res.checks if not r.passed]
            worst_hold = max([worst_hold] + [abs(r.measured - r.expected) for r in res.checks])
        c.detail = (f"{clean}/{combos} write/read combos, read disturb {worst_read * 1e3:.2f} mV, "
                    f"1 us hold drift {worst_hold * 1e3:.2e} mV")
        assert combos == 8
        assert worst_read < 0.05 and worst_hold < 1e-3
        assert failures == []


def test_6_architecture_claim(criterion):
    with criterion(6, "per-bit hold-leakage ratio above 1") as c:
        report = compare_leakage()
        c.detail = (f"ratio {report.ratio:.6f} (savings {report.savings_percent:.2f} %), "
                    f"conventional {report.conventional.per_bit:.4e} W/bit, "
                    f"proposed {report.proposed.per_bit:.4e} W/bit")
        assert report.ratio > 1.0


def test_7_parser_robustness(criterion):
    with criterion(7, "parser round trip and golden diagnostics") as c:
        nets = corpus()
        for netlist in nets.values():
            text = serialize_netlist(netlist)
            once = parse_netlist(text)
            assert once == netlist and serialize_netlist(once) == text
        expected = json.loads((DATA / "malformed" / "expected.json").read_text())
        for name, exp in expected.items():
            got = diagnose((DATA / "malformed" / f"{name}.cir").read_text())
            assert [(d.line, d.column, d.severity, d.message) for d in got] == \
                [(e["line"], e["column"], e["severity"], e["message"]) for e in exp]
        c.detail = f"{len(nets)} corpus netlists, {len(expected)} malformed inputs"


def _outputs(root: Path):
    # manifests carry wall-clock time and are excluded
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and not p.name.endswith(".manifest.json")}


def test_8_cli_determinism(criterion, tmp_path, capsys):
    with criterion(8, "CLI determinism") as c:
        src = tmp_path / "in"
        src.mkdir()
        (src / "div.cir").write_text("t\nV1 in 0 DC 1.0\nR1 in out 1k\nR2 out 0 1k\n.end\n")
        (src / "rc.cir").write_text(RC)
        commands = [
            ["op", str(src / "div.cir")],
            ["tran", str(src / "rc.cir"), "--tstop", "5e-6", "--dt", "1e-8", "--out", "{o}/rc.csv"],
            ["scenario", "--arch", "proposed", "--op", "write", "--cell", "lower", "--bit", "1",
             "--out", "{o}/scn"],
            ["scenario", "--arch", "conventional", "--op", "read", "--cell", "0", "--out", "{o}/rd"],
            ["scenario", "--arch", "conventional", "--op", "hold", "--hold-time", "1e-7",
             "--out", "{o}/hold"],
            ["compare-leakage", "--hold-time", "2e-7", "--out", "{o}/cmp.json"],
            ["plot", str(src / "rc.csv"), "--out", "{o}/rc.svg"],
        ]
        # plot needs an input CSV that does not change between runs
        assert main(commands[1][:-1] + [str(src / "rc.csv")]) == 0
        runs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            out.mkdir()
            capsys.readouterr()
            stdout = []
            for cmd in commands:
                assert main([a.format(o=out) for a in cmd]) == 0, cmd
                stdout.append(capsys.readouterr().out.replace(str(out), "{o}"))
            runs.append((_outputs(out), stdout))
        (files_a, out_a), (files_b, out_b) = runs
        c.detail = f"{len(commands)} invocations, {len(files_a)} output files compared"
        assert files_a.keys() == files_b.keys() and len(files_a) >= 6
        assert all(files_a[k] == files_b[k] for k in files_a)
        assert out_a == out_b
