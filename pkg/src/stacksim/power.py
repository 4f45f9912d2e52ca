"""Hold-power extraction and the per-bit leakage comparison between columns."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from .builders import (CONVENTIONAL, PROPOSED, CellConfig, build_conventional_column,
                       build_proposed_column)
from .engine import SolverConfig, Waveform
from .netlist import serialize_netlist
from .protocol import run_scenario, sequence_hold

# Leakage runs lower the shunt conductance so that gmin currents (1 pS at a
# 2.4 V node is 2.4 pA) stay far below the cell leakage being measured.
LEAKAGE_GMIN = 1e-15
HOLD_DT = 1e-9
MIN_WINDOW_STEPS = 10


class WindowError(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


def _window_samples(w: Waveform, signal: str, window):
    t0, t1 = window
    t = w.time
    inside = (t > t0) & (t < t1)
    ts = np.concatenate(([t0], t[inside], [t1]))
    vs = np.interp(ts, t, w[signal])
    return ts, vs


def measure_hold_power(w: Waveform, signal: str, v_supply: float, window,
                       settle_margin: float = 0.0):
    """Mean ``|i|`` of ``signal`` over ``window = (t0, t1)`` and the power
    ``v_supply * mean``.

    The window must start no earlier than ``settle_margin``, end inside the
    waveform and span at least ten time steps.
    """
    if signal not in w:
        raise KeyError(f"no signal {signal!r} in waveform")
    t0, t1 = float(window[0]), float(window[1])
    if t0 < settle_margin or t0 < w.time[0] or t1 > w.time[-1] or not t1 > t0:
        raise WindowError(f"window ({t0:.6g}, {t1:.6g}) s is outside "
                          f"[{settle_margin:.6g}, {w.time[-1]:.6g}] s")
    dt = float(np.min(np.diff(w.time))) if len(w.time) > 1 else 0.0
    if dt == 0.0 or (t1 - t0) < MIN_WINDOW_STEPS * dt * (1 - 1e-9):
        raise WindowError(f"window shorter than {MIN_WINDOW_STEPS} time steps")
    ts, i = _window_samples(w, signal, (t0, t1))
    mean = float(trapezoid(np.abs(i), ts) / (t1 - t0))
    return mean, v_supply * mean


def scenario_energy(w: Waveform, supplies) -> float:
    """Energy delivered by ``supplies`` (``(signal, volts)`` pairs) over the
    whole waveform, in joules.  Reported for reads and writes only."""
    return float(sum(v * trapezoid(np.abs(w[s]), w.time) for s, v in supplies))


@dataclass(frozen=True)
class SupplyPower:
    name: str
    voltage: float
    mean_current: float
    power: float

    def as_dict(self) -> dict:
        return {"name": self.name, "voltage_v": self.voltage,
                "mean_current_a": self.mean_current, "power_w": self.power}


@dataclass(frozen=True)
class ArchitecturePower:
    """Hold leakage of one column."""

    arch: str
    window: tuple
    stored_bits: int
    supplies: tuple
    config_key: str = ""
    netlist_text: str = field(default="", repr=False)

    def __post_init__(self):
        if self.stored_bits < 1:
            raise ValueError("stored_bits must be >= 1")

    @property
    def power(self) -> float:
        return sum(s.power for s in self.supplies)

    @property
    def per_bit(self) -> float:
        return self.power / self.stored_bits

    @property
    def supply_voltage(self) -> float:
        return max(s.voltage for s in self.supplies)

    @property
    def mean_current(self) -> float:
        return sum(s.mean_current for s in self.supplies)

    def as_dict(self) -> dict:
        return {"architecture": self.arch, "supply_voltage_v": self.supply_voltage,
                "hold_window_s": list(self.window), "mean_supply_current_a": self.mean_current,
                "leakage_power_w": self.power, "stored_bits": self.stored_bits,
                "leakage_per_bit_w": self.per_bit,
                "supplies": [s.as_dict() for s in self.supplies]}


@dataclass(frozen=True)
class PowerReport:
    conventional: ArchitecturePower
    proposed: ArchitecturePower
    ratio: float
    savings: float
    fingerprint: str

    @property
    def savings_percent(self) -> float:
        return 100.0 * self.savings

    def as_dict(self) -> dict:
        return {"config_fingerprint": self.fingerprint,
                "conventional": self.conventional.as_dict(),
                "proposed": self.proposed.as_dict(),
                "ratio": self.ratio, "savings_percent": self.savings_percent}

    def to_json(self) -> str:
        return sci_json(self.as_dict())


def sci_json(obj) -> str:
    """JSON text with every float written in scientific notation."""
    def conv(o):
        if isinstance(o, dict):
            return {k: conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [conv(v) for v in o]
        if isinstance(o, float):
            return f"\x00{o:.9e}\x00"
        return o

    text = json.dumps(conv(obj), indent=2)
    return re.sub(r'"\\u0000([^"\\]*)\\u0000"', r"\1", text) + "\n"


def fingerprint(netlist_texts, solver: SolverConfig) -> str:
    h = hashlib.sha256()
    for text in netlist_texts:
        h.update(text.encode("utf-8"))
        h.update(b"\x00")
    h.update(json.dumps(solver.as_dict(), sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def comparison_key(cell: CellConfig, solver: SolverConfig, window) -> str:
    """Hash of everything that must match between the two sides: device
    cards, sizing, solver settings and the hold window."""
    payload = {"cell": cell.as_dict(), "solver": solver.as_dict(), "window": list(window)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def compare_architectures(conv: ArchitecturePower, prop: ArchitecturePower,
                          solver: SolverConfig | None = None) -> PowerReport:
    """Per-bit ratio ``conventional / proposed`` and savings ``1 - 1/ratio``."""
    if conv.config_key != prop.config_key:
        raise ConfigMismatch("measurements come from different configurations: "
                             f"{conv.config_key[:12]} != {prop.config_key[:12]}")
    if not prop.per_bit > 0:
        raise ValueError("proposed per-bit power must be positive to form a ratio")
    ratio = conv.per_bit / prop.per_bit
    texts = [conv.netlist_text, prop.netlist_text]
    fp = fingerprint(texts, solver) if solver is not None else \
        hashlib.sha256("\x00".join(texts + [conv.config_key]).encode("utf-8")).hexdigest()
    return PowerReport(conv, prop, ratio, 1.0 - 1.0 / ratio, fp)


def leakage_solver(hold_time: float = 1e-6, dt: float = HOLD_DT,
                   base: SolverConfig | None = None) -> SolverConfig:
    base = base or SolverConfig(gmin=LEAKAGE_GMIN)
    return replace(base, dt=dt, tstop=hold_time)


def build_column(arch: str, cell: CellConfig, n_bits: int, init_bits=None):
    if arch == CONVENTIONAL:
        return build_conventional_column(cell, n_bits, init_bits)
    if arch == PROPOSED:
        if n_bits % 2:
            raise ValueError("the stacked column stores an even number of bits")
        return build_proposed_column(cell, n_bits // 2, init_bits)
    raise ValueError(f"unknown architecture {arch!r}")


def hold_leakage(arch: str, cell: CellConfig | None = None, n_bits: int = 2,
                 hold_time: float = 1e-6, solver: SolverConfig | None = None,
                 init_bits=None, settle_fraction: float = 0.1, window=None) -> ArchitecturePower:
    """Simulate a quiescent hold of ``hold_time`` and measure every supply.

    Stored data defaults to all zeros.  The measurement window defaults to
    the last ``1 - settle_fraction`` of the run.
    """
    cell = cell or CellConfig()
    solver = solver or leakage_solver(hold_time)
    solver = replace(solver, tstop=hold_time)
    bits = [0] * n_bits if init_bits is None else list(init_bits)
    netlist, sig = build_column(arch, cell, n_bits, bits)
    result = run_scenario(netlist, sig, sequence_hold(sig, hold_time), solver)
    margin = settle_fraction * hold_time
    window = tuple(window) if window is not None else (margin, hold_time)
    supplies = []
    for src in sig.supplies:
        volts = netlist.device(src).value
        mean, pw = measure_hold_power(result.waveform, f"I({src})", volts, window, margin)
        supplies.append(SupplyPower(src, volts, mean, pw))
    return ArchitecturePower(arch, window, n_bits, tuple(supplies),
                             comparison_key(cell, solver, window), serialize_netlist(netlist))


def compare_leakage(cell: CellConfig | None = None, hold_time: float = 1e-6,
                    dt: float = HOLD_DT, n_bits: int = 2, solver: SolverConfig | None = None,
                    init_bits=None) -> PowerReport:
    """``n_bits`` conventional cells at vdd against ``n_bits / 2`` stacked
    pairs at the elevated rail, same cards, same data, same window."""
    if not hold_time > 0:
        raise ValueError("hold time must be positive")
    cell = cell or CellConfig()
    solver = leakage_solver(hold_time, dt, solver)
    conv = hold_leakage(CONVENTIONAL, cell, n_bits, hold_time, solver, init_bits)
    prop = hold_leakage(PROPOSED, cell, n_bits, hold_time, solver, init_bits)
    return compare_architectures(conv, prop, solver)
