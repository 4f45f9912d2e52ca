"""Netlist generators for conventional and series-stacked 6T SRAM columns.

Device numbering follows the usual two-cell drawing: in each cell the
pull-ups, pull-downs and access transistors are numbered 1-6, and the second
cell of a pair continues with 7-12.  Within a cell::

    M1  pull-up   q  side (p-channel)     M2  pull-down q  side
    M3  pull-up   qb side (p-channel)     M4  pull-down qb side
    M5  access  q  <-> bl                 M6  access  qb <-> blb

Peripheral elements use fixed name prefixes so structural counts can be read
back from a netlist: ``MPC`` precharge devices, ``CBL`` bit-line loads,
``CPC`` precharge capacitors, ``CQ``/``CQB`` storage-node loads, ``SDEN``
data-enable switches, ``A`` sense amplifiers.  ``SINV``/``SLS`` switches are the ideal data-complement and
level-shift drivers and are not part of the cell array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .devices import DEFAULT_NMOS, DEFAULT_PMOS, MosParams
from .netlist import (CAPACITOR, DC_SOURCE, GROUND, MOS, RESISTOR, SENSEAMP, SWITCH,
                      Netlist, make_device)

CONVENTIONAL = "conventional"
PROPOSED = "proposed"

NCH, PCH = "nch", "pch"


@dataclass(frozen=True)
class CellConfig:
    vdd: float = 1.2
    vddh_factor: float = 2.0
    nmos: MosParams = DEFAULT_NMOS
    pmos: MosParams = DEFAULT_PMOS
    pull_up_wl: float = 1.0
    pull_down_wl: float = 2.0
    access_wl: float = 1.5
    precharge_wl: float = 4.0
    bitline_cap: float = 50e-15
    precharge_cap: float = 100e-15
    mid_cap: float = 5e-12
    node_cap: float = 1e-15
    senseamp_gain: float = 1000.0
    data_switch_ron: float = 100.0
    driver_ron: float = 10.0
    switch_roff: float = 1e14
    sense_load: float = 1e6

    def __post_init__(self):
        if self.vdd <= 0:
            raise ValueError("vdd must be positive")
        if self.vddh_factor <= 1:
            raise ValueError("vddh_factor must exceed 1")
        for name in ("bitline_cap", "precharge_cap", "mid_cap", "node_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nmos.polarity != "nmos" or self.pmos.polarity != "pmos":
            raise ValueError("nmos/pmos cards have the wrong polarity")

    @property
    def vddh(self) -> float:
        return self.vddh_factor * self.vdd

    def models(self) -> dict:
        return {NCH: self.nmos, PCH: self.pmos}

    def as_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            out[k] = v.__dict__.copy() if isinstance(v, MosParams) else v
        return out


@dataclass(frozen=True)
class CellNodes:
    """Where one stored bit lives and which rails bound it."""

    address: int
    q: str
    qb: str
    rail_hi: str
    rail_lo: str
    branch: int


@dataclass(frozen=True)
class ColumnSignals:
    """Node names of a generated column, indexed uniformly for both designs.

    ``word_lines[a]`` drives address ``a``; ``bit_lines``,
    ``data_enables``, ``precharge_enables`` and ``sense_outputs`` are per
    read/write branch (one for the conventional column, two for the stacked
    one).  ``levels`` maps every control signal to its
    ``(deasserted, asserted)`` voltages; precharge enables are active low.
    """

    arch: str
    vdd: float
    word_lines: tuple
    bit_lines: tuple
    data_enables: tuple
    precharge_enables: tuple
    data: str
    sense_outputs: tuple
    cells: tuple
    supplies: tuple
    levels: dict = field(default_factory=dict)

    @property
    def capacity(self) -> int:
        return len(self.word_lines)

    @property
    def controls(self) -> tuple:
        return self.word_lines + self.data_enables + self.precharge_enables + (self.data,)

    def cell(self, address: int) -> CellNodes:
        return self.cells[address]

    def all_nodes(self) -> list:
        out = list(self.controls)
        for pair in self.bit_lines:
            out.extend(pair)
        out.extend(self.sense_outputs)
        for c in self.cells:
            out.extend([c.q, c.qb])
        return out


@dataclass(frozen=True)
class CellFragment:
    devices: tuple
    q: str
    qb: str


@dataclass(frozen=True)
class PairFragment:
    devices: tuple
    mid: str
    upper: CellFragment
    lower: CellFragment


def _mos(name, d, g, s, b, model, wl):
    return make_device(name, MOS, (d, g, s, b), model=model, w=wl, l=1.0)


def build_6t_cell(cfg: CellConfig, instance_prefix: str, rail_hi: str, rail_lo: str,
                  bl: str, blb: str, wl: str, q: str | None = None, qb: str | None = None,
                  first_index: int = 1, existing=()) -> CellFragment:
    """Six transistors of one cell between ``rail_hi`` and ``rail_lo``.

    Device names are ``f"{instance_prefix}{k}"`` for ``k`` counting up from
    ``first_index``; the prefix must start with ``M``.
    """
    if not instance_prefix.upper().startswith("M"):
        raise ValueError("MOS instance names must start with 'M'")
    q = q or f"{instance_prefix}{first_index}_q"
    qb = qb or f"{instance_prefix}{first_index}_qb"
    nodes = [rail_hi, rail_lo, bl, blb, wl, q, qb]
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"cell nodes must be distinct: {nodes}")
    k = first_index
    names = [f"{instance_prefix}{k + i}" for i in range(6)]
    clash = set(names) & set(existing)
    if clash:
        raise ValueError(f"instance names already in use: {sorted(clash)}")
    devs = (
        _mos(names[0], q, qb, rail_hi, rail_hi, PCH, cfg.pull_up_wl),
        _mos(names[1], q, qb, rail_lo, rail_lo, NCH, cfg.pull_down_wl),
        _mos(names[2], qb, q, rail_hi, rail_hi, PCH, cfg.pull_up_wl),
        _mos(names[3], qb, q, rail_lo, rail_lo, NCH, cfg.pull_down_wl),
        _mos(names[4], bl, wl, q, rail_lo, NCH, cfg.access_wl),
        _mos(names[5], blb, wl, qb, rail_lo, NCH, cfg.access_wl),
    )
    return CellFragment(devs, q, qb)


def build_stacked_pair(cfg: CellConfig, prefix: str = "M", pair: int = 0,
                       rail_hi: str = "vddh", bit_lines=(("BL0", "BL0b"), ("BL1", "BL1b")),
                       word_lines=None) -> PairFragment:
    """Two cells in series: the lower between ground and a shared mid rail,
    the upper between the mid rail and ``rail_hi``.

    The upper cell (devices 1-6) uses the first bit-line pair and the even
    word line; the lower cell (7-12) uses the second pair and the odd word
    line.  The mid rail has no source; only ``cfg.mid_cap`` loads it.
    """
    mid = f"mid{pair}"
    wl_u, wl_l = word_lines or (f"WL{2 * pair}", f"WL{2 * pair + 1}")
    base = 12 * pair + 1
    upper = build_6t_cell(cfg, prefix, rail_hi, mid, *bit_lines[0], wl_u,
                          q=f"q{2 * pair}", qb=f"qb{2 * pair}", first_index=base)
    lower = build_6t_cell(cfg, prefix, mid, GROUND, *bit_lines[1], wl_l,
                          q=f"q{2 * pair + 1}", qb=f"qb{2 * pair + 1}", first_index=base + 6,
                          existing=[d.name for d in upper.devices])
    cmid = make_device(f"CMID{pair}", CAPACITOR, (mid, GROUND), value=cfg.mid_cap)
    return PairFragment(upper.devices + lower.devices + (cmid,), mid, upper, lower)


def _src(name, node, volts):
    return make_device(name, DC_SOURCE, (node, GROUND), value=volts)


def _switch(name, a, b, cp, cn, ron, cfg):
    return make_device(name, SWITCH, (a, b, cp, cn), ron=ron, roff=cfg.switch_roff,
                       vt=cfg.vdd / 2, vw=0.02)


def _senseamp(name, bl, blb, out, ref, cfg):
    return make_device(name, SENSEAMP, (bl, blb, out, ref), gain=cfg.senseamp_gain,
                       vlo=0.0, vhi=cfg.vdd)


def _complement_driver(prefix, data, out, hi, cfg):
    """Ideal inverter: ``out`` follows NOT ``data`` between ``hi`` and ground."""
    return (_switch(f"{prefix}P", hi, out, hi, data, cfg.driver_ron, cfg),
            _switch(f"{prefix}N", out, GROUND, data, GROUND, cfg.driver_ron, cfg))


def _storage_caps(cfg, cells):
    """Lumped gate and junction load on every storage node (``CQ``/``CQB``)."""
    out = []
    for c in cells:
        out.append(make_device(f"CQ{c.address}", CAPACITOR, (c.q, c.rail_lo), value=cfg.node_cap))
        out.append(make_device(f"CQB{c.address}", CAPACITOR, (c.qb, c.rail_lo), value=cfg.node_cap))
    return out


def _bits(init_bits, n):
    if init_bits is None:
        return [1 - (a % 2) for a in range(n)]  # 1, 0, 1, 0, ...
    bits = list(init_bits)
    if len(bits) != n or any(b not in (0, 1) for b in bits):
        raise ValueError(f"init_bits must hold {n} values of 0/1")
    return bits


def build_conventional_column(cfg: CellConfig, n_cells: int = 2, init_bits=None):
    """``n_cells`` cells on one bit-line pair, all tied to vdd and ground.

    ``init_bits`` selects the stored data through ``.ic`` entries (default
    alternating 1, 0, ...).  Returns ``(netlist, signals)``.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    bits = _bits(init_bits, n_cells)
    vdd = cfg.vdd
    devs = [
        _src("VDD", "vdd", vdd),
        _src("VDRV", "vdrv", vdd),
        _src("VREF", "vref", vdd / 2),
        _src("VPC0", "PC0", vdd),
        _src("VDEN0", "DEN0", 0.0),
        _src("VD", "D", 0.0),
    ]
    wls = tuple(f"WL{k}" for k in range(n_cells))
    devs += [_src(f"V{wl}", wl, 0.0) for wl in wls]
    cells, initial, names = [], {}, []
    for k in range(n_cells):
        frag = build_6t_cell(cfg, "M", "vdd", GROUND, "BL", "BLb", wls[k],
                             q=f"q{k}", qb=f"qb{k}", first_index=6 * k + 1, existing=names)
        names += [d.name for d in frag.devices]
        devs += frag.devices
        cells.append(CellNodes(k, frag.q, frag.qb, "vdd", GROUND, 0))
        initial[frag.q] = vdd if bits[k] else 0.0
        initial[frag.qb] = 0.0 if bits[k] else vdd
    devs += _storage_caps(cfg, cells)
    devs += [
        make_device("CBL", CAPACITOR, ("BL", GROUND), value=cfg.bitline_cap),
        make_device("CBLB", CAPACITOR, ("BLb", GROUND), value=cfg.bitline_cap),
        _mos("MPC0A", "BL", "PC0", "vdd", "vdd", PCH, cfg.precharge_wl),
        _mos("MPC0B", "BLb", "PC0", "vdd", "vdd", PCH, cfg.precharge_wl),
        *_complement_driver("SINV0", "D", "Db", "vdrv", cfg),
        _switch("SDEN0A", "D", "BL", "DEN0", GROUND, cfg.data_switch_ron, cfg),
        _switch("SDEN0B", "Db", "BLb", "DEN0", GROUND, cfg.data_switch_ron, cfg),
        _senseamp("ASA", "BL", "BLb", "SA_OUT", "vref", cfg),
        make_device("RSA", RESISTOR, ("SA_OUT", GROUND), value=cfg.sense_load),
    ]
    netlist = Netlist(f"conventional 6T column, {n_cells} cells", tuple(devs), cfg.models(),
                      initial=tuple(initial.items()))
    levels = {wl: (0.0, vdd) for wl in wls}
    levels.update({"PC0": (vdd, 0.0), "DEN0": (0.0, vdd), "D": (0.0, vdd)})
    sig = ColumnSignals(CONVENTIONAL, vdd, wls, (("BL", "BLb"),), ("DEN0",), ("PC0",), "D",
                        ("SA_OUT",), tuple(cells), ("VDD",), levels)
    return netlist, sig


def build_proposed_column(cfg: CellConfig, n_pairs: int = 1, init_bits=None):
    """``n_pairs`` stacked pairs sharing two bit-line pairs.

    Even addresses are upper cells (first pair ``BL0``/``BL0b``, precharged to
    the elevated rail, sensed by ``SA0``); odd addresses are lower cells
    (``BL1``/``BL1b`` precharged to vdd, sensed by ``SA1``).  Returns
    ``(netlist, signals)``.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    n = 2 * n_pairs
    bits = _bits(init_bits, n)
    vdd, vddh = cfg.vdd, cfg.vddh
    devs = [
        _src("VDDH", "vddh", vddh),
        _src("VDD", "vdd", vdd),
        _src("VDRV", "vdrv", vdd),
        _src("VDRVH", "vdrvh", vddh),
        _src("VREF", "vref", vdd / 2),
        _src("VREFH", "vrefh", (vdd + vddh) / 2),
        _src("VPC0", "PC0", vddh),
        _src("VPC1", "PC1", vdd),
        _src("VDEN0", "DEN0", 0.0),
        _src("VDEN1", "DEN1", 0.0),
        _src("VD", "D", 0.0),
    ]
    wls = tuple(f"WL{a}" for a in range(n))
    devs += [_src(f"V{wl}", wl, 0.0) for wl in wls]
    cells, initial = [], {}
    for p in range(n_pairs):
        frag = build_stacked_pair(cfg, "M", p)
        devs += frag.devices
        up, lo = 2 * p, 2 * p + 1
        cells.append(CellNodes(up, frag.upper.q, frag.upper.qb, "vddh", frag.mid, 0))
        cells.append(CellNodes(lo, frag.lower.q, frag.lower.qb, frag.mid, GROUND, 1))
        initial[frag.mid] = vdd
        initial[frag.upper.q] = vddh if bits[up] else vdd
        initial[frag.upper.qb] = vdd if bits[up] else vddh
        initial[frag.lower.q] = vdd if bits[lo] else 0.0
        initial[frag.lower.qb] = 0.0 if bits[lo] else vdd
    devs += _storage_caps(cfg, cells)
    devs += [
        make_device("CBL0", CAPACITOR, ("BL0", GROUND), value=cfg.bitline_cap),
        make_device("CBL0B", CAPACITOR, ("BL0b", GROUND), value=cfg.bitline_cap),
        make_device("CBL1", CAPACITOR, ("BL1", GROUND), value=cfg.bitline_cap),
        make_device("CBL1B", CAPACITOR, ("BL1b", GROUND), value=cfg.bitline_cap),
        make_device("CPC0", CAPACITOR, ("BL0", GROUND), value=cfg.precharge_cap),
        make_device("CPC0B", CAPACITOR, ("BL0b", GROUND), value=cfg.precharge_cap),
        make_device("CPC1", CAPACITOR, ("BL1", GROUND), value=cfg.precharge_cap),
        make_device("CPC1B", CAPACITOR, ("BL1b", GROUND), value=cfg.precharge_cap),
        _mos("MPC0A", "BL0", "PC0", "vddh", "vddh", PCH, cfg.precharge_wl),
        _mos("MPC0B", "BL0b", "PC0", "vddh", "vddh", PCH, cfg.precharge_wl),
        _mos("MPC1A", "BL1", "PC1", "vdd", "vdd", PCH, cfg.precharge_wl),
        _mos("MPC1B", "BL1b", "PC1", "vdd", "vdd", PCH, cfg.precharge_wl),
        # lower branch data: D and its complement in [0, vdd]
        *_complement_driver("SINV1", "D", "Db", "vdrv", cfg),
        # upper branch data: D shifted into [vdd, vddh]
        _switch("SLS0P", "vdrvh", "DH", "D", GROUND, cfg.driver_ron, cfg),
        _switch("SLS0N", "DH", "vdrv", "vdrv", "D", cfg.driver_ron, cfg),
        _switch("SLS1P", "vdrvh", "DHb", "vdrv", "D", cfg.driver_ron, cfg),
        _switch("SLS1N", "DHb", "vdrv", "D", GROUND, cfg.driver_ron, cfg),
        _switch("SDEN0A", "DH", "BL0", "DEN0", GROUND, cfg.data_switch_ron, cfg),
        _switch("SDEN0B", "DHb", "BL0b", "DEN0", GROUND, cfg.data_switch_ron, cfg),
        _switch("SDEN1A", "D", "BL1", "DEN1", GROUND, cfg.data_switch_ron, cfg),
        _switch("SDEN1B", "Db", "BL1b", "DEN1", GROUND, cfg.data_switch_ron, cfg),
        _senseamp("ASA0", "BL0", "BL0b", "SA0_OUT", "vrefh", cfg),
        _senseamp("ASA1", "BL1", "BL1b", "SA1_OUT", "vref", cfg),
        make_device("RSA0", RESISTOR, ("SA0_OUT", GROUND), value=cfg.sense_load),
        make_device("RSA1", RESISTOR, ("SA1_OUT", GROUND), value=cfg.sense_load),
    ]
    netlist = Netlist(f"series-stacked 6T column, {n_pairs} pair(s)", tuple(devs), cfg.models(),
                      initial=tuple(initial.items()))
    levels = {wl: (0.0, vddh if a % 2 == 0 else vdd) for a, wl in enumerate(wls)}
    levels.update({"PC0": (vddh, 0.0), "PC1": (vdd, 0.0), "DEN0": (0.0, vdd),
                   "DEN1": (0.0, vdd), "D": (0.0, vdd)})
    sig = ColumnSignals(PROPOSED, vdd, wls, (("BL0", "BL0b"), ("BL1", "BL1b")), ("DEN0", "DEN1"),
                        ("PC0", "PC1"), "D", ("SA0_OUT", "SA1_OUT"), tuple(cells),
                        ("VDDH", "VDD"), levels)
    return netlist, sig


def build_cell_netlist(cfg: CellConfig, bit: int | None = 1, rail_hi: float | None = None) -> Netlist:
    """A lone cell with its word line low and bit lines held at the rail.

    ``bit=None`` omits the initial-condition entries.
    """
    vhi = cfg.vdd if rail_hi is None else rail_hi
    frag = build_6t_cell(cfg, "M", "vdd", GROUND, "bl", "blb", "wl", q="q", qb="qb")
    devs = (_src("VDD", "vdd", vhi), _src("VWL", "wl", 0.0), _src("VBL", "bl", vhi),
            _src("VBLB", "blb", vhi)) + frag.devices
    initial = () if bit is None else (("q", vhi if bit else 0.0), ("qb", 0.0 if bit else vhi))
    return Netlist("6T cell", devs, cfg.models(), initial=initial)


def count_roles(netlist: Netlist) -> dict:
    """Structural counts by role, read back from instance names."""
    def starts(prefix, kind):
        return sum(1 for d in netlist.devices if d.kind == kind and d.name.startswith(prefix))

    mos = netlist.of_kind(MOS)
    return {
        "cell_transistors": sum(1 for d in mos if not d.name.startswith("MPC")),
        "precharge_devices": starts("MPC", MOS),
        "precharge_caps": starts("CPC", CAPACITOR),
        "bitline_caps": starts("CBL", CAPACITOR),
        "sense_amps": len(netlist.of_kind(SENSEAMP)),
        "data_switches": starts("SDEN", SWITCH),
    }
