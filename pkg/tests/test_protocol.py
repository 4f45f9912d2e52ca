import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stacksim.builders import CellConfig, build_conventional_column, build_proposed_column
from stacksim.engine import SolverConfig, Waveform
from stacksim.protocol import (LOWER, UPPER, CellSelect, Check, ScenarioError,
                               StimulusSchedule, Timing, check_safety, decode_address,
                               run_scenario, sequence_hold, sequence_read, sequence_write)

CFG = CellConfig()
FAST = SolverConfig(dt=1e-11)


@pytest.fixture(scope="module")
def conv():
    return build_conventional_column(CFG, 2)


@pytest.fixture(scope="module")
def prop():
    return build_proposed_column(CFG, 1)


def test_decode_proposed(prop):
    _, sig = prop
    s0 = decode_address(sig, 0)
    assert (s0.word_line, s0.bit_lines, s0.sense_output) == ("WL0", ("BL0", "BL0b"), "SA0_OUT")
    s1 = decode_address(sig, 1)
    assert (s1.word_line, s1.bit_lines, s1.sense_output) == ("WL1", ("BL1", "BL1b"), "SA1_OUT")


def test_decode_conventional():
    _, sig = build_conventional_column(CFG, 4)
    for k in range(4):
        s = decode_address(sig, k)
        assert (s.word_line, s.bit_lines, s.sense_output) == (f"WL{k}", ("BL", "BLb"), "SA_OUT")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_decode_is_bijective(n):
    for _, sig in (build_conventional_column(CFG, n), build_proposed_column(CFG, n)):
        triples = {(s.word_line, s.bit_lines, s.sense_output)
                   for s in (decode_address(sig, a) for a in range(sig.capacity))}
        assert len(triples) == sig.capacity


def test_decode_out_of_range(prop):
    with pytest.raises(ValueError):
        decode_address(prop[1], 2)
    with pytest.raises(ValueError):
        decode_address(prop[1], -1)


def test_cell_select(prop, conv):
    assert CellSelect(UPPER).address(prop[1]) == 0
    assert CellSelect(LOWER).address(prop[1]) == 1
    assert CellSelect(1).address(conv[1]) == 1
    with pytest.raises(ValueError):
        CellSelect(UPPER).address(conv[1])
    with pytest.raises(ValueError):
        CellSelect(5).address(conv[1])
    with pytest.raises(ValueError):
        CellSelect(UPPER, pair=1).address(prop[1])


def _events(s, name):
    return [(t, v) for t, sig, v in s.events if sig == name]


def test_read_upper_drives_pc0_and_wl0(prop):
    _, sig = prop
    s = sequence_read(sig, CellSelect(UPPER))
    assert _events(s, "PC0")[1][1] == 0.0
    assert max(v for _, v in _events(s, "WL0")) == CFG.vddh
    for den in ("DEN0", "DEN1"):
        assert {v for _, v in _events(s, den)} == {0.0}
    last_pc = max(t for t, _ in _events(s, "PC0"))
    first_wl = min(t for t, v in _events(s, "WL0") if v > 0)
    assert last_pc < first_wl
    assert {v for _, v in _events(s, "WL1")} == {0.0}
    assert {v for _, v in _events(s, "PC1")} == {CFG.vdd}


def test_write_lower_orders_den_and_wl(prop):
    _, sig = prop
    s = sequence_write(sig, CellSelect(LOWER), 1)
    den_on = min(t for t, v in _events(s, "DEN1") if v > 0)
    wl_on = min(t for t, v in _events(s, "WL1") if v > 0)
    wl_off = max(t for t, v in _events(s, "WL1") if v == 0.0 and t > 0)
    den_off = max(t for t, v in _events(s, "DEN1") if v == 0.0 and t > 0)
    assert den_on < wl_on < wl_off < den_off
    assert {v for _, v in _events(s, "DEN0")} == {0.0}


def test_hold_schedule_is_quiescent(conv):
    _, sig = conv
    s = sequence_hold(sig, 1e-6)
    assert {t for t, _, _ in s.events} == {0.0}
    assert all(c.time == 1e-6 for c in s.checks)
    with pytest.raises(ValueError):
        sequence_hold(sig, 0.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        StimulusSchedule(((1.0, "a", 0.0), (0.5, "a", 1.0)), 2.0)
    with pytest.raises(ValueError):
        StimulusSchedule(((3.0, "a", 0.0),), 2.0)


def test_then_shifts_events_and_checks(conv):
    _, sig = conv
    a = sequence_write(sig, 0, 1)
    b = sequence_read(sig, 0, expected_bit=1)
    ab = a.then(b)
    assert ab.duration == pytest.approx(a.duration + b.duration)
    assert len(ab.checks) == len(a.checks) + len(b.checks)
    assert ab.checks[-1].time == pytest.approx(b.checks[-1].time + a.duration)


ops = st.lists(st.tuples(st.sampled_from(["read", "write", "hold"]), st.integers(0, 3),
                         st.integers(0, 1)), min_size=1, max_size=4)


@settings(max_examples=40, deadline=None)
@given(ops, st.booleans())
def test_protocol_safety(seq, stacked):
    _, sig = build_proposed_column(CFG, 2) if stacked else build_conventional_column(CFG, 4)
    sched = None
    for op, addr, bit in seq:
        if op == "read":
            s = sequence_read(sig, addr, expected_bit=bit)
        elif op == "write":
            s = sequence_write(sig, addr, bit)
        else:
            s = sequence_hold(sig, 5e-9)
        sched = s if sched is None else sched.then(s)
    assert check_safety(sig, sched) == []


def test_safety_detects_overlap(conv):
    _, sig = conv
    bad = StimulusSchedule(((0.0, "WL0", 1.2), (0.0, "WL1", 1.2), (0.0, "DEN0", 1.2),
                            (0.0, "PC0", 0.0)), 1e-9)
    problems = check_safety(sig, bad)
    assert any("word lines" in p for p in problems)
    assert any("DEN0" in p for p in problems)


def test_zero_width_read_keeps_state(conv):
    n, sig = conv
    s = sequence_read(sig, 0, Timing(wl_pulse=0.0), expected_bit=1)
    res = run_scenario(n, sig, s, FAST)
    for c in sig.cells:
        for node in (c.q, c.qb):
            assert abs(res.waveform[node][-1] - res.waveform[node][0]) < 1e-3


def test_fresh_conventional_read(conv):
    n, sig = conv
    res = run_scenario(n, sig, sequence_read(sig, 1, expected_bit=0), FAST)
    assert res.passed
    assert res.waveform.at("SA_OUT", res.checks[0].time) < 0.1 * CFG.vdd


def test_write_is_idempotent(conv):
    n, sig = conv
    # address 0 starts holding 1
    res = run_scenario(n, sig, sequence_write(sig, 0, 1), FAST)
    assert res.passed
    w = res.waveform
    assert abs(w["q0"][-1] - w["q0"][0]) < 0.01 and abs(w["qb0"][-1] - w["qb0"][0]) < 0.01


def test_write0_write1_read(prop):
    n, sig = prop
    sel = CellSelect(UPPER)
    s = sequence_write(sig, sel, 0).then(sequence_write(sig, sel, 1)).then(
        sequence_read(sig, sel, expected_bit=1))
    res = run_scenario(n, sig, s, FAST)
    assert res.passed, [c for c in res.checks if not c.passed]
    strobe = [c for c in res.checks if c.name.startswith("sense")][-1]
    assert res.waveform.at("SA0_OUT", strobe.time) > 0.9 * CFG.vdd


def test_hold_after_writes_keeps_both_cells(prop):
    n, sig = prop
    s = sequence_write(sig, CellSelect(UPPER), 0).then(
        sequence_write(sig, CellSelect(LOWER), 1)).then(sequence_hold(sig, 20e-9))
    res = run_scenario(n, sig, s, FAST)
    assert res.passed, [c for c in res.checks if not c.passed]
    w = res.waveform
    assert w["q0"][-1] < w["qb0"][-1] and w["q1"][-1] > w["qb1"][-1]


def test_empty_schedule(conv):
    n, sig = conv
    res = run_scenario(n, sig, StimulusSchedule(), SolverConfig(dt=1e-10, tstop=2e-9))
    assert res.checks == []
    assert res.waveform.time[-1] == pytest.approx(2e-9)
    assert np.ptp(res.waveform["q0"]) < 1e-9


def test_unknown_signal_rejected(conv):
    n, sig = conv
    with pytest.raises(ValueError):
        run_scenario(n, sig, StimulusSchedule(((0.0, "nope", 1.0),), 1e-9), FAST)


def test_failures_tagged_with_phase(conv):
    n, sig = conv
    s = sequence_write(sig, 0, 0)
    with pytest.raises(ScenarioError) as exc:
        run_scenario(n, sig, s, SolverConfig(dt=1e-11, max_newton_iters=2, gmin_steps=1))
    assert exc.value.phase


def test_check_relative_and_difference():
    w = Waveform(np.array([0.0, 1.0]), {"a": np.array([1.0, 1.02]), "b": np.array([0.0, 0.5])})
    assert Check("drift", 1.0, "a", tol=0.05, ref_time=0.0).evaluate(w).passed
    assert not Check("drift", 1.0, "a", tol=0.01, ref_time=0.0).evaluate(w).passed
    r = Check("diff", 1.0, "a", 0.52, 1e-9, minus="b").evaluate(w)
    assert r.passed and r.measured == pytest.approx(0.52)


def test_result_json(conv):
    n, sig = conv
    res = run_scenario(n, sig, sequence_hold(sig, 20e-9), SolverConfig(dt=1e-9))
    data = json.loads(res.to_json("hold.csv"))
    assert set(data) == {"scenario", "architecture", "checks", "waveform_ref"}
    assert data["architecture"] == "conventional" and data["waveform_ref"] == "hold.csv"
    assert set(data["checks"][0]) == {"name", "time_s", "expected_v", "measured_v", "pass"}
