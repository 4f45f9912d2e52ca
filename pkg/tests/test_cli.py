import json
import re

import numpy as np
import pytest

from stacksim.builders import CellConfig, build_cell_netlist
from stacksim.cli import EXIT_CHECK, EXIT_OK, EXIT_PARSE, EXIT_USAGE, format_number, main
from stacksim.export import read_csv
from stacksim.netlist import serialize_netlist

from test_engine import RC, TAU

DIVIDER = "divider\nV1 in 0 DC 1.0\nR1 in out 1k\nR2 out 0 1k\n.op\n.end\n"


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)
    return _write


def test_format_number():
    assert format_number(0.5) == "5.00000e-1"
    assert format_number(-1.2e-12) == "-1.20000e-12"
    assert format_number(0.0) == "0.00000e0"


def test_op_divider(write, capsys):
    assert main(["op", write("d.cir", DIVIDER)]) == EXIT_OK
    out = capsys.readouterr().out
    assert re.search(r"^out +5\.00000e-1$", out, re.M)


def test_op_malformed(write, capsys):
    path = write("bad.cir", "t\nM1 q qb 0 0 nmos_def W=2 L=1\n.end\n")
    assert main(["op", path]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert re.search(r"2:1: error: missing model 'nmos_def'", err)


def test_op_cell(write, capsys):
    cfg = CellConfig()
    path = write("cell.cir", serialize_netlist(build_cell_netlist(cfg, bit=1)))
    assert main(["op", path]) == EXIT_OK
    table = dict(line.split() for line in capsys.readouterr().out.splitlines()[1:])
    assert abs(float(table["q"]) - cfg.vdd) < 1e-3 and abs(float(table["qb"])) < 1e-3


def test_op_missing_file(capsys):
    assert main(["op", "/nonexistent.cir"]) == EXIT_USAGE


def test_tran_rc(write, tmp_path):
    out = tmp_path / "rc.csv"
    args = ["tran", write("rc.cir", RC), "--tstop", str(5 * TAU), "--dt", str(TAU / 100),
            "--out", str(out)]
    assert main(args) == EXIT_OK
    w = read_csv(out)
    k = int(np.argmin(np.abs(w.time - TAU)))
    assert w["out"][k] == pytest.approx(0.632121, rel=5e-3)
    first = out.read_bytes()
    assert main(args) == EXIT_OK
    assert out.read_bytes() == first
    assert out.read_text().startswith("time_s,")
    assert (tmp_path / "rc.csv.manifest.json").exists()


@pytest.mark.parametrize("flags", [["--tstop", "0", "--dt", "1e-9"],
                                   ["--tstop", "1e-9", "--dt", "-1"],
                                   ["--tstop", "1e-9", "--dt", "1e-8"],
                                   []])
def test_tran_rejects_bad_times(write, tmp_path, flags):
    path = write("rc.cir", RC)
    assert main(["tran", path, *flags, "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_tran_uses_netlist_directive(write, tmp_path):
    path = write("rc.cir", RC.replace(".end", ".tran 1e-8 1e-7\n.end"))
    out = tmp_path / "rc.csv"
    assert main(["tran", path, "--out", str(out)]) == EXIT_OK
    assert read_csv(out).time[-1] == pytest.approx(1e-7)


def test_scenario_proposed_write_upper(tmp_path, capsys):
    out = tmp_path / "w"
    rc = main(["scenario", "--arch", "proposed", "--op", "write", "--cell", "upper",
               "--bit", "1", "--out", str(out)])
    assert rc == EXIT_OK, capsys.readouterr().out
    checks = json.loads((out / "checks.json").read_text())
    assert checks["checks"] and all(c["pass"] for c in checks["checks"])
    header = (out / "waveform.csv").read_text().splitlines()[0].split(",")
    assert {"SA0_OUT", "WL0", "WL1", "D", "BL0", "BL0b", "q0"} <= set(header)
    assert (out / "waveform.csv.manifest.json").exists()
    assert (out / "checks.json.manifest.json").exists()


@pytest.mark.parametrize("flags", [
    ["--arch", "conventional", "--op", "write", "--out"],              # missing bit
    ["--arch", "conventional", "--op", "read", "--bit", "1", "--out"],
    ["--arch", "conventional", "--op", "read", "--cell", "upper", "--out"],
    ["--arch", "conventional", "--op", "read", "--cell", "7", "--out"],
    ["--arch", "sideways", "--op", "read", "--out"],
    ["--arch", "conventional", "--op", "hold", "--hold-time", "0", "--out"],
])
def test_scenario_bad_flags(tmp_path, flags):
    assert main(["scenario", *flags, str(tmp_path / "s")]) == EXIT_USAGE


@pytest.mark.parametrize("arch", ["conventional", "proposed"])
def test_scenario_hold_pins_word_lines(tmp_path, arch):
    out = tmp_path / arch
    assert main(["scenario", "--arch", arch, "--op", "hold", "--hold-time", "5e-8",
                 "--out", str(out)]) == EXIT_OK
    w = read_csv(out / "waveform.csv")
    wls = [n for n in w.names if n.startswith("WL")]
    assert len(wls) == 2
    for name in wls + [n for n in w.names if n.startswith("DEN")]:
        assert np.all(w[name] == 0.0)


def test_scenario_reports_check_failures(tmp_path, capsys, monkeypatch):
    # a zero-width word-line pulse cannot flip the cell, so the write check fails
    from stacksim import cli
    from stacksim.protocol import Timing
    orig = cli.sequence_write
    monkeypatch.setattr(cli, "sequence_write",
                        lambda sig, sel, bit: orig(sig, sel, bit, Timing(wl_pulse=0.0)))
    rc = main(["scenario", "--arch", "conventional", "--op", "write", "--cell", "0",
               "--bit", "0", "--out", str(tmp_path / "f")])
    assert rc == EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out
    assert (tmp_path / "f" / "checks.json").exists()


def test_compare_leakage(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["compare-leakage", "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert re.search(r"^ratio \d", stdout, re.M) and "savings" in stdout
    data = json.loads(out.read_text())
    assert data["ratio"] > 1.0
    first = out.read_bytes()
    assert main(["compare-leakage", "--out", str(out)]) == EXIT_OK
    assert out.read_bytes() == first


@pytest.mark.parametrize("flags", [["--hold-time", "0"], ["--n-bits", "3"], ["--bits", "012"],
                                   ["--dt", "1e-5"]])
def test_compare_rejects(tmp_path, flags):
    assert main(["compare-leakage", *flags, "--out", str(tmp_path / "r.json")]) == EXIT_USAGE


def _csv(tmp_path, names):
    path = tmp_path / "w.csv"
    rows = ["time_s," + ",".join(names)]
    for t in range(5):
        rows.append(",".join(f"{x:.8e}" for x in [t * 1e-9] + [t * (k + 1.0) for k in range(len(names))]))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_plot_single_signal(tmp_path):
    out = tmp_path / "p.svg"
    assert main(["plot", str(_csv(tmp_path, ["a"])), "--out", str(out)]) == EXIT_OK
    svg = out.read_text()
    assert svg.count("<polyline") == 1 and 'version="1.1"' in svg
    first = out.read_bytes()
    main(["plot", str(_csv(tmp_path, ["a"])), "--out", str(out)])
    assert out.read_bytes() == first


def test_plot_absent_signal(tmp_path, capsys):
    rc = main(["plot", str(_csv(tmp_path, ["a", "b"])), "--signals", "zz", "--out",
               str(tmp_path / "p.svg")])
    assert rc == EXIT_USAGE
    err = capsys.readouterr().err
    assert "zz" in err and "available: a, b" in err


def test_plot_scenario_traces(tmp_path):
    out = tmp_path / "w"
    assert main(["scenario", "--arch", "proposed", "--op", "write", "--cell", "lower",
                 "--bit", "0", "--out", str(out)]) == EXIT_OK
    svg = tmp_path / "w.svg"
    assert main(["plot", str(out / "waveform.csv"), "--signals", "WL1,D,q1",
                 "--out", str(svg)]) == EXIT_OK
    text = svg.read_text()
    assert text.count("<polyline") == 3
    for name in ("WL1", "D", "q1"):
        assert f">{name}<" in text
