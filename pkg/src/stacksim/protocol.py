"""Read, write and hold stimulus schedules and a scenario runner.

A schedule is a list of ``(time, signal, level)`` events plus checks that
are evaluated on the resulting waveform.  Signals are node names from a
:class:`~stacksim.builders.ColumnSignals`; asserted/deasserted voltages come
from ``ColumnSignals.levels`` so the same sequence code drives both column
designs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .builders import CONVENTIONAL, PROPOSED, ColumnSignals
from .engine import SimulationError, SolverConfig, Waveform, pwl_points, transient
from .netlist import Netlist

UPPER, LOWER = "upper", "lower"


@dataclass(frozen=True)
class Timing:
    """Phase durations in seconds."""

    precharge: float = 2e-9
    settle: float = 1e-9
    wl_pulse: float = 2e-9
    strobe_lead: float = 100e-12
    edge: float = 100e-12
    recover: float = 5e-9

    def __post_init__(self):
        if min(self.precharge, self.settle, self.recover, self.edge) <= 0:
            raise ValueError("phase durations must be positive")
        if self.wl_pulse < 0 or self.strobe_lead < 0:
            raise ValueError("wl_pulse and strobe_lead must be non-negative")


@dataclass(frozen=True)
class Check:
    """``signal`` (minus ``minus`` if given) at ``time`` should equal
    ``expected`` within ``tol``.  With ``ref_time`` the expected value is the
    same quantity measured at that earlier time instead."""

    name: str
    time: float
    signal: str
    expected: float = 0.0
    tol: float = 0.0
    minus: str | None = None
    ref_time: float | None = None

    def measure(self, w: Waveform, t: float) -> float:
        v = w.at(self.signal, t)
        if self.minus is not None:
            v -= w.at(self.minus, t)
        return v

    def evaluate(self, w: Waveform) -> "CheckResult":
        measured = self.measure(w, self.time)
        expected = self.expected if self.ref_time is None else self.measure(w, self.ref_time)
        return CheckResult(self.name, self.time, expected, measured,
                           bool(abs(measured - expected) <= self.tol))

    def shifted(self, dt: float) -> "Check":
        ref = None if self.ref_time is None else self.ref_time + dt
        return replace(self, time=self.time + dt, ref_time=ref)


@dataclass(frozen=True)
class CheckResult:
    name: str
    time: float
    expected: float
    measured: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "time_s": self.time, "expected_v": self.expected,
                "measured_v": self.measured, "pass": self.passed}


@dataclass(frozen=True)
class StimulusSchedule:
    events: tuple = ()
    duration: float = 0.0
    checks: tuple = ()
    edge: float = 100e-12
    phases: tuple = ()  # (start time, label)
    name: str = "schedule"

    def __post_init__(self):
        times = [e[0] for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be non-decreasing")
        if times and (times[0] < 0 or times[-1] > self.duration):
            raise ValueError("event times must lie in [0, duration]")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    @property
    def signals(self) -> set:
        return {e[1] for e in self.events}

    def then(self, other: "StimulusSchedule") -> "StimulusSchedule":
        """This schedule followed by ``other`` shifted to start at the end."""
        t0 = self.duration
        # other's t = 0 initialisation merely restates quiescent levels
        events = self.events + tuple((t + t0, s, v) for t, s, v in other.events if t > 0)
        return StimulusSchedule(events, t0 + other.duration,
                                self.checks + tuple(c.shifted(t0) for c in other.checks),
                                self.edge, self.phases + tuple((t + t0, p) for t, p in other.phases),
                                f"{self.name}+{other.name}")

    def level_at(self, signal: str, t: float, initial: float = 0.0) -> float:
        evs = [(tt, v) for tt, s, v in self.events if s == signal]
        if not evs:
            return initial
        ts, vs = pwl_points(evs, evs[0][1], self.edge)
        return float(np.interp(t, ts, vs))

    def phase_at(self, t: float) -> str:
        label = "init"
        for start, p in self.phases:
            if start <= t:
                label = p
        return label


@dataclass(frozen=True)
class CellSelect:
    """A cell of the column: ``upper``/``lower`` of pair ``pair`` for the
    stacked design, or row ``index`` for the conventional one."""

    which: str | int
    pair: int = 0

    def address(self, sig: ColumnSignals) -> int:
        if sig.arch == CONVENTIONAL:
            if not isinstance(self.which, (int, np.integer)):
                raise ValueError("conventional cells are selected by row index")
            addr = int(self.which)
        else:
            if self.which not in (UPPER, LOWER):
                raise ValueError("stacked cells are selected as 'upper' or 'lower'")
            addr = 2 * self.pair + (0 if self.which == UPPER else 1)
        if not 0 <= addr < sig.capacity:
            raise ValueError(f"address {addr} outside column of {sig.capacity} cells")
        return addr


@dataclass(frozen=True)
class Selection:
    address: int
    word_line: str
    bit_lines: tuple
    sense_output: str
    branch: int


def decode_address(sig: ColumnSignals, addr: int) -> Selection:
    """Word line, bit-line pair and sense amplifier that serve ``addr``."""
    if not 0 <= addr < sig.capacity:
        raise ValueError(f"address {addr} outside column of {sig.capacity} cells")
    branch = 0 if sig.arch == CONVENTIONAL else addr % 2
    return Selection(addr, sig.word_lines[addr], sig.bit_lines[branch],
                     sig.sense_outputs[branch], branch)


def _quiescent(sig: ColumnSignals):
    return [(0.0, s, sig.levels[s][0]) for s in sig.controls]


def _on(sig, s):
    return sig.levels[s][1]


def _off(sig, s):
    return sig.levels[s][0]


def _retention_checks(sig, t, ref_time, tol, skip=(), label="disturb"):
    out = []
    for c in sig.cells:
        if c.address in skip:
            continue
        for node in (c.q, c.qb):
            out.append(Check(f"{label} {node}", t, node, tol=tol, ref_time=ref_time))
    return out


def _resolve(sig, sel):
    """``sel`` is a :class:`CellSelect` or a bare address."""
    addr = sel.address(sig) if isinstance(sel, CellSelect) else int(sel)
    return decode_address(sig, addr)


def sequence_read(sig: ColumnSignals, sel, timing: Timing = Timing(), expected_bit: int = 1,
                  disturb_tol: float = 0.05, sense_tol: float = 0.1) -> StimulusSchedule:
    """Precharge the selected pair, release, pulse the word line, strobe.

    Data enables stay low throughout.  The sense output is checked at
    ``strobe_lead`` before the word line falls; every cell's storage nodes
    are checked ``recover`` after it falls against their pre-read values.
    """
    s = _resolve(sig, sel)
    pc = sig.precharge_enables[s.branch]
    t_pc = timing.settle
    t_rel = t_pc + timing.precharge
    t_wl = t_rel + timing.settle
    t_fall = t_wl + timing.wl_pulse
    end = t_fall + timing.recover
    events = _quiescent(sig) + [
        (t_pc, pc, _on(sig, pc)),
        (t_rel, pc, _off(sig, pc)),
        (t_wl, s.word_line, _on(sig, s.word_line)),
        (t_fall, s.word_line, _off(sig, s.word_line)),
    ]
    expected = sig.vdd if expected_bit else 0.0
    checks = [Check(f"sense {s.sense_output}", t_fall - timing.strobe_lead, s.sense_output,
                    expected, sense_tol * sig.vdd)]
    checks += _retention_checks(sig, end, t_wl, disturb_tol, label="read disturb")
    phases = ((0.0, "init"), (t_pc, "precharge"), (t_rel, "settle"),
              (t_wl, "word line"), (t_fall, "recover"))
    return StimulusSchedule(tuple(sorted(events, key=lambda e: e[0])), end, tuple(checks),
                            timing.edge, phases, f"read@{s.address}")


def sequence_write(sig: ColumnSignals, sel, bit: int, timing: Timing = Timing(),
                   disturb_tol: float = 0.05, decisive: float = 0.8) -> StimulusSchedule:
    """Drive D, assert the branch data enable, pulse the word line, release.

    The selected cell's ``q - qb`` must end beyond ``decisive`` of its rail
    span with the written polarity; other cells must not move by more than
    ``disturb_tol``.
    """
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    s = _resolve(sig, sel)
    den = sig.data_enables[s.branch]
    t_d = timing.settle
    t_den = t_d + timing.settle
    t_wl = t_den + timing.settle
    t_fall = t_wl + timing.wl_pulse
    t_rel = t_fall + timing.settle
    end = t_rel + timing.recover
    events = _quiescent(sig) + [
        (t_d, sig.data, sig.levels[sig.data][bit]),
        (t_den, den, _on(sig, den)),
        (t_wl, s.word_line, _on(sig, s.word_line)),
        (t_fall, s.word_line, _off(sig, s.word_line)),
        (t_rel, den, _off(sig, den)),
        (t_rel, sig.data, _off(sig, sig.data)),
    ]
    cell = sig.cell(s.address)
    span = sig.vdd  # every cell sees one vdd between its local rails
    target = span if bit else -span
    checks = [Check(f"write q-qb @{s.address}", end, cell.q, target,
                    (1.0 - decisive) * span, minus=cell.qb)]
    checks += _retention_checks(sig, end, t_d, disturb_tol, skip=(s.address,),
                                label="write disturb")
    phases = ((0.0, "init"), (t_d, "data"), (t_den, "data enable"), (t_wl, "word line"),
              (t_fall, "release"), (t_rel, "recover"))
    return StimulusSchedule(tuple(sorted(events, key=lambda e: e[0])), end, tuple(checks),
                            timing.edge, phases, f"write{bit}@{s.address}")


def sequence_hold(sig: ColumnSignals, duration: float, drift_tol: float = 1e-3,
                  edge: float = 100e-12) -> StimulusSchedule:
    """All word lines, data enables and precharge enables off for ``duration``."""
    if not duration > 0:
        raise ValueError("hold duration must be positive")
    checks = _retention_checks(sig, duration, 0.0, drift_tol, label="hold drift")
    return StimulusSchedule(tuple(_quiescent(sig)), duration, tuple(checks), edge,
                            ((0.0, "hold"),), "hold")


def check_safety(sig: ColumnSignals, s: StimulusSchedule) -> list:
    """Protocol violations: overlapping word lines, or a data enable and the
    same branch's precharge asserted together.  Returns messages."""
    times = sorted({0.0, s.duration} | {t for t, _, _ in s.events}
                   | {t + s.edge for t, _, _ in s.events if t + s.edge <= s.duration})
    problems = []

    def asserted(name, t):
        off, on = sig.levels[name]
        v = s.level_at(name, t, off)
        return abs(v - on) < abs(v - off)

    for t in times:
        high = [w for w in sig.word_lines if asserted(w, t)]
        if len(high) > 1:
            problems.append(f"t={t:.4g}: word lines {high} asserted together")
        for den, pc in zip(sig.data_enables, sig.precharge_enables):
            if asserted(den, t) and asserted(pc, t):
                problems.append(f"t={t:.4g}: {den} and {pc} asserted together")
    return problems


class ScenarioError(SimulationError):
    def __init__(self, message, phase=None, time=None):
        self.phase = phase
        self.time = time
        super().__init__(message)


@dataclass
class ScenarioResult:
    name: str
    arch: str
    waveform: Waveform
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self, waveform_ref: str | None = None) -> dict:
        return {"scenario": self.name, "architecture": self.arch,
                "checks": [c.as_dict() for c in self.checks], "waveform_ref": waveform_ref}

    def to_json(self, waveform_ref: str | None = None) -> str:
        return json.dumps(self.as_dict(waveform_ref), indent=2) + "\n"


def run_scenario(netlist: Netlist, sig: ColumnSignals, s: StimulusSchedule,
                 cfg: SolverConfig | None = None) -> ScenarioResult:
    """Simulate ``s`` on ``netlist`` and evaluate its checks.

    The transient runs for the schedule duration (or ``cfg.tstop`` when the
    schedule is empty) from the netlist's initial conditions.
    """
    cfg = cfg or SolverConfig()
    unknown = s.signals - set(sig.controls)
    if unknown:
        raise ValueError(f"schedule drives signals not in the column: {sorted(unknown)}")
    stop = s.duration if s.duration > 0 else cfg.tstop
    run_cfg = replace(cfg, tstop=stop, dt=min(cfg.dt, stop))
    try:
        w = transient(netlist, run_cfg, s if s.events else None)
    except SimulationError as exc:
        t = getattr(exc, "time", None)
        phase = s.phase_at(t) if t is not None else "operating point"
        raise ScenarioError(f"{s.name} failed during {phase}: {exc}", phase, t) from exc
    return ScenarioResult(s.name, sig.arch, w, [c.evaluate(w) for c in s.checks])


__all__ = ["UPPER", "LOWER", "PROPOSED", "CONVENTIONAL", "Timing", "Check", "CheckResult",
           "StimulusSchedule", "CellSelect", "Selection", "decode_address", "sequence_read",
           "sequence_write", "sequence_hold", "check_safety", "ScenarioError",
           "ScenarioResult", "run_scenario"]
