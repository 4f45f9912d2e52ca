"""Modified nodal analysis with Newton-Raphson DC and fixed-step transient.

Unknowns are the non-ground node voltages followed by one branch current per
voltage source and per behavioural sense amplifier.  Every element adds its
current to a residual vector ``f(x)`` (currents leaving each node, plus the
branch constraint rows) and its partial derivatives to the Jacobian.  Ground
is kept as an extra trailing slot during assembly and dropped before solving.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from . import devices
from .netlist import (CAPACITOR, DC_SOURCE, GROUND, MOS, PULSE_SOURCE, RESISTOR,
                      SENSEAMP, SWITCH, Netlist)

BACKWARD_EULER = "backward-euler"
TRAPEZOIDAL = "trapezoidal"

# conductance of the initial-condition forcing switches
FORCING_CONDUCTANCE = 1.0
# per-iteration cap on node voltage updates
VOLTAGE_STEP_LIMIT = 0.5
# after this many Newton iterations the cap halves every 10 iterations,
# which breaks the two-cycles a flipping latch can fall into
DAMPING_START = 20


@dataclass(frozen=True)
class SolverConfig:
    abstol: float = 1e-12
    vntol: float = 1e-6
    reltol: float = 1e-3
    max_newton_iters: int = 100
    gmin: float = 1e-12
    gmin_steps: int = 10
    integrator: str = TRAPEZOIDAL
    dt: float = 1e-11
    tstop: float = 1e-8

    def __post_init__(self):
        for name in ("abstol", "vntol", "reltol", "gmin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.dt <= self.tstop:
            raise ValueError("require 0 < dt <= tstop")
        if self.integrator not in (BACKWARD_EULER, TRAPEZOIDAL):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.max_newton_iters < 1 or self.gmin_steps < 1:
            raise ValueError("iteration counts must be >= 1")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class SimulationError(RuntimeError):
    pass


class NonConvergence(SimulationError):
    def __init__(self, message, time=None, trace=()):
        self.time = time
        self.trace = list(trace)
        super().__init__(message)


class SingularMatrix(SimulationError):
    def __init__(self, message, index=None, node=None):
        self.index = index
        self.node = node
        super().__init__(message)


def solve_linear(a, b):
    """Solve ``a @ x = b`` by LU factorisation with partial pivoting.

    Raises :class:`SingularMatrix` when a pivot falls below ``1e-13`` times
    the largest initial entry of the row it was taken from; ``exc.index`` is
    the elimination column.  Comparing against the pivot row keeps the test
    independent of how the rows happen to be scaled.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    row_max = np.max(np.abs(a), axis=1) if a.size else np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    perm = np.arange(len(a))
    for k, p in enumerate(piv):
        perm[k], perm[p] = perm[p], perm[k]
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(~(pivots >= 1e-13 * row_max[perm]) | (row_max[perm] == 0))
    if bad.size:
        k = int(bad[0])
        raise SingularMatrix(f"singular matrix at column {k}", index=k)
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


# ---------------------------------------------------------------- waveforms

@dataclass
class Waveform:
    time: np.ndarray
    signals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        if self.time.size and self.time[0] != 0.0:
            raise ValueError("waveform must start at t = 0")
        if np.any(np.diff(self.time) <= 0):
            raise ValueError("time must be strictly increasing")
        for name, series in self.signals.items():
            series = np.asarray(series, dtype=float)
            if series.shape != self.time.shape:
                raise ValueError(f"signal {name!r} length differs from time")
            if not np.all(np.isfinite(series)):
                raise ValueError(f"signal {name!r} has non-finite samples")
            self.signals[name] = series

    def __getitem__(self, name) -> np.ndarray:
        return self.signals[name]

    def __contains__(self, name) -> bool:
        return name in self.signals

    @property
    def names(self) -> list:
        return list(self.signals)

    def at(self, name, t) -> float:
        """Linearly interpolated value of ``name`` at time ``t``."""
        return float(np.interp(t, self.time, self.signals[name]))


@dataclass
class OperatingPoint:
    voltages: dict
    currents: dict
    x: np.ndarray = field(repr=False)
    iterations: int = 0

    def __getitem__(self, name):
        if name in self.voltages:
            return self.voltages[name]
        return self.currents[name]


# ------------------------------------------------------------ source shapes

def pulse_value(p: dict, t: float) -> float:
    v1, v2 = p["v1"], p["v2"]
    td, tr, tf, pw, per = p["delay"], p["rise"], p["fall"], p["width"], p["period"]
    if t <= td:
        return v1
    tt = t - td
    if per > 0:
        tt = math.fmod(tt, per)
    if tt < tr:
        return v1 + (v2 - v1) * tt / tr if tr > 0 else v2
    tt -= tr
    if tt < pw:
        return v2
    tt -= pw
    if tt < tf:
        return v2 + (v1 - v2) * tt / tf if tf > 0 else v1
    return v1


def pulse_breakpoints(p: dict, tstop: float) -> list:
    td, tr, tf, pw, per = p["delay"], p["rise"], p["fall"], p["width"], p["period"]
    out = []
    start = td
    while start <= tstop:
        out.extend([start, start + tr, start + tr + pw, start + tr + pw + tf])
        if per <= 0:
            break
        start += per
    return [t for t in out if t <= tstop]


def pwl_points(events, initial: float, edge: float):
    """Breakpoints ``(times, levels)`` for one signal's ``(time, level)`` events.

    An event at t = 0 sets the starting level; later events ramp from the
    present value to the new level over ``edge`` seconds.  An event that
    lands inside an earlier ramp cuts that ramp short.
    """
    ts, vs = [0.0], [initial]
    for t, level in events:
        if t <= 0.0:
            ts, vs = [0.0], [level]
            continue
        cur = float(np.interp(t, ts, vs))
        keep = [i for i, ti in enumerate(ts) if ti < t]
        ts = [ts[i] for i in keep] + [t, t + edge]
        vs = [vs[i] for i in keep] + [cur, level]
    return np.array(ts), np.array(vs)


class _Pwl:
    def __init__(self, ts, vs):
        self.ts, self.vs = ts, vs

    def __call__(self, t):
        return float(np.interp(t, self.ts, self.vs))


# ------------------------------------------------------------- MNA system

class _ParamArrays:
    """Column view of many MosParams so the model vectorises over devices."""

    def __init__(self, cards):
        for name in ("vth0", "kp", "n_slope", "eta_dibl", "lambda_clm", "w_over_l", "temp_vt"):
            setattr(self, name, np.array([getattr(c, name) for c in cards]))
        self.sign = np.array([c.sign for c in cards])


class MnaSystem:
    """Compiled form of a :class:`Netlist` ready for repeated assembly."""

    def __init__(self, netlist: Netlist, stimulus=None, edge=None):
        self.netlist = netlist
        self.node_names = [n for n in netlist.nodes if n != GROUND]
        self.node_index = {n: i for i, n in enumerate(self.node_names)}
        self.n_nodes = len(self.node_names)
        self.node_index[GROUND] = -1  # patched to the ground slot below

        branch_devs = [d for d in netlist.devices if d.kind in (DC_SOURCE, PULSE_SOURCE, SENSEAMP)]
        self.branch_names = [d.name for d in branch_devs]
        self.size = self.n_nodes + len(branch_devs)
        gnd = self.size
        self.gnd = gnd
        self.node_index[GROUND] = gnd
        idx = self.node_index
        size1 = self.size + 1

        g_lin = np.zeros((size1, size1))
        self.sources = []  # (branch row, callable(t), name)
        self.breakpoints = []  # stimulus ramp corners
        self.pulses = []
        sa = []
        res, caps, mos, sw = [], [], [], []
        stim = self._stimulus_functions(stimulus, edge)
        fixed_nodes = set()
        br = self.n_nodes
        for d in netlist.devices:
            nd = [idx[n] for n in d.nodes]
            if d.kind == RESISTOR:
                res.append((nd[0], nd[1], 1.0 / d.value))
            elif d.kind == CAPACITOR:
                caps.append((nd[0], nd[1], d.value))
            elif d.kind in (DC_SOURCE, PULSE_SOURCE):
                p, m = nd
                g_lin[p, br] += 1.0
                g_lin[m, br] -= 1.0
                g_lin[br, p] += 1.0
                g_lin[br, m] -= 1.0
                if d.nodes[1] == GROUND:
                    fixed_nodes.add(p)
                if d.nodes[1] == GROUND and d.nodes[0] in stim:
                    fn = stim.pop(d.nodes[0])
                    self.breakpoints.extend(fn.ts.tolist())
                elif d.kind == DC_SOURCE:
                    fn = _const(d.value)
                else:
                    fn = _PulseFn(d.pdict)
                    self.pulses.append(d.pdict)
                self.sources.append((br, fn, d.name))
                br += 1
            elif d.kind == SENSEAMP:
                p = d.pdict
                out = nd[2]
                g_lin[out, br] += 1.0
                g_lin[br, out] += 1.0
                sa.append((br, nd[0], nd[1], p["gain"], p["vlo"], p["vhi"]))
                br += 1
            elif d.kind == MOS:
                mos.append((nd, netlist.mos_params(d)))
            elif d.kind == SWITCH:
                p = d.pdict
                sw.append((nd, 1.0 / p["ron"], 1.0 / p["roff"], p["vt"], p["vw"]))
            else:
                raise ValueError(f"unsupported device kind {d.kind!r}")
        if stim:
            raise ValueError(f"no grounded voltage source drives stimulus signal(s) {sorted(stim)}")
        for a, b, g in res:
            g_lin[a, a] += g
            g_lin[b, b] += g
            g_lin[a, b] -= g
            g_lin[b, a] -= g
        self.g_lin = g_lin
        self.res = np.array(res, dtype=float).reshape(-1, 3)

        self.cap_p = np.array([c[0] for c in caps], dtype=int)
        self.cap_n = np.array([c[1] for c in caps], dtype=int)
        self.cap_c = np.array([c[2] for c in caps], dtype=float)
        c_mat = np.zeros((size1, size1))
        for a, b, c in caps:
            c_mat[a, a] += c
            c_mat[b, b] += c
            c_mat[a, b] -= c
            c_mat[b, a] -= c
        self.c_mat = c_mat

        self.n_mos = len(mos)
        if mos:
            self.m_d, self.m_g, self.m_s, self.m_b = (np.array([m[0][k] for m in mos]) for k in range(4))
            self.m_par = _ParamArrays([m[1] for m in mos])
            rows_d = np.repeat(self.m_d, 4).reshape(-1, 4)
            rows_s = np.repeat(self.m_s, 4).reshape(-1, 4)
            cols = np.stack([self.m_g, self.m_d, self.m_s, self.m_b], axis=1)
            self.m_flat = np.concatenate([(rows_d * size1 + cols).ravel(), (rows_s * size1 + cols).ravel()])

        self.n_sw = len(sw)
        if sw:
            self.s_p, self.s_n, self.s_cp, self.s_cn = (np.array([s[0][k] for s in sw]) for k in range(4))
            self.s_gon = np.array([s[1] for s in sw])
            self.s_goff = np.array([s[2] for s in sw])
            self.s_vt = np.array([s[3] for s in sw])
            self.s_vw = np.array([s[4] for s in sw])
            rp = np.repeat(self.s_p, 4).reshape(-1, 4)
            rn = np.repeat(self.s_n, 4).reshape(-1, 4)
            cols = np.stack([self.s_p, self.s_n, self.s_cp, self.s_cn], axis=1)
            self.s_flat = np.concatenate([(rp * size1 + cols).ravel(), (rn * size1 + cols).ravel()])

        self.n_sa = len(sa)
        if sa:
            self.a_br, self.a_p, self.a_m = (np.array([s[k] for s in sa]) for k in range(3))
            self.a_gain = np.array([s[3] for s in sa])
            self.a_lo = np.array([s[4] for s in sa])
            self.a_hi = np.array([s[5] for s in sa])

        mask = np.zeros(size1)
        mask[: self.n_nodes] = 1.0
        for k in fixed_nodes:
            mask[k] = 0.0
        self.gmin_mask = mask
        self.node_mask = np.zeros(size1, dtype=bool)
        self.node_mask[: self.n_nodes] = True
        self.src_rows = np.array([s[0] for s in self.sources], dtype=int)

    @staticmethod
    def _stimulus_functions(stimulus, edge):
        if stimulus is None:
            return {}
        events = stimulus if isinstance(stimulus, (list, tuple)) else stimulus.events
        edge = edge if edge is not None else getattr(stimulus, "edge", 0.0)
        by_signal = {}
        for t, sig, level in events:
            by_signal.setdefault(sig, []).append((t, level))
        out = {}
        for sig, evs in by_signal.items():
            evs.sort(key=lambda e: e[0])
            # a signal whose first event is later than t = 0 starts at that
            # event's level
            ts, vs = pwl_points(evs, evs[0][1], edge)
            out[sig] = _Pwl(ts, vs)
        return out

    def name_of(self, k: int) -> str:
        if k < self.n_nodes:
            return self.node_names[k]
        return f"I({self.branch_names[k - self.n_nodes]})"

    def source_values(self, t, alpha=1.0):
        return np.array([fn(t) for _, fn, _ in self.sources]) * alpha

    def assemble(self, x, t, alpha=1.0, extra_gmin=0.0, gmin=0.0, force=None, caps=None):
        """Residual, Jacobian and per-node largest branch-current magnitude."""
        size1 = self.size + 1
        xe = np.append(x, 0.0)
        jac = self.g_lin.copy()
        f = self.g_lin @ xe
        mag = np.zeros(size1)
        if self.sources:
            f[self.src_rows] -= self.source_values(t, alpha)
            np.maximum.at(mag, self._src_nodes, np.abs(xe[self._src_brs]))
        if len(self.res):
            a, b, g = self.res[:, 0].astype(int), self.res[:, 1].astype(int), self.res[:, 2]
            ir = np.abs(g * (xe[a] - xe[b]))
            np.maximum.at(mag, a, ir)
            np.maximum.at(mag, b, ir)

        g_tot = gmin * self.gmin_mask + extra_gmin * self.node_mask
        f += g_tot * xe
        jac[np.diag_indices(size1)] += g_tot

        if force:
            for k, v in force.items():
                f[k] += FORCING_CONDUCTANCE * (xe[k] - v)
                jac[k, k] += FORCING_CONDUCTANCE

        if caps is not None and len(self.cap_c):
            a_coef, vc_prev, hist = caps
            vc = xe[self.cap_p] - xe[self.cap_n]
            ic = a_coef * self.cap_c * (vc - vc_prev) - hist
            np.add.at(f, self.cap_p, ic)
            np.add.at(f, self.cap_n, -ic)
            jac += a_coef * self.c_mat
            np.maximum.at(mag, self.cap_p, np.abs(ic))
            np.maximum.at(mag, self.cap_n, np.abs(ic))

        if self.n_mos:
            p = self.m_par
            sgn = p.sign
            vg, vd, vs, vb = (sgn * xe[i] for i in (self.m_g, self.m_d, self.m_s, self.m_b))
            i_d = sgn * devices._n_current(p, vg, vd, vs, vb)
            gm, gds, gms = devices._n_conductances(p, vg, vd, vs, vb)
            gmb = -(gm + gds + gms)
            np.add.at(f, self.m_d, i_d)
            np.add.at(f, self.m_s, -i_d)
            block = np.stack([gm, gds, gms, gmb], axis=1)
            np.add.at(jac.ravel(), self.m_flat, np.concatenate([block.ravel(), -block.ravel()]))
            ai = np.abs(i_d)
            np.maximum.at(mag, self.m_d, ai)
            np.maximum.at(mag, self.m_s, ai)

        if self.n_sw:
            vc = xe[self.s_cp] - xe[self.s_cn]
            sig = expit((vc - self.s_vt) / self.s_vw)
            g = self.s_goff + (self.s_gon - self.s_goff) * sig
            dg = (self.s_gon - self.s_goff) * sig * (1.0 - sig) / self.s_vw
            v = xe[self.s_p] - xe[self.s_n]
            i_s = g * v
            np.add.at(f, self.s_p, i_s)
            np.add.at(f, self.s_n, -i_s)
            block = np.stack([g, -g, dg * v, -dg * v], axis=1)
            np.add.at(jac.ravel(), self.s_flat, np.concatenate([block.ravel(), -block.ravel()]))
            ai = np.abs(i_s)
            np.maximum.at(mag, self.s_p, ai)
            np.maximum.at(mag, self.s_n, ai)

        if self.n_sa:
            span = self.a_hi - self.a_lo
            z = 4.0 * self.a_gain * (xe[self.a_p] - xe[self.a_m]) / span
            sig = expit(z)
            f[self.a_br] -= self.a_lo + span * sig
            d = 4.0 * self.a_gain * sig * (1.0 - sig)
            np.add.at(jac, (self.a_br, self.a_p), -d)
            np.add.at(jac, (self.a_br, self.a_m), d)
            np.maximum.at(mag, self._sa_out, np.abs(xe[self.a_br]))

        n = self.size
        return f[:n], jac[:n, :n], mag[:n]

    def finalize(self):
        """Index helpers for branch-current magnitudes at source terminals."""
        nodes, brs = [], []
        devs = [d for d in self.netlist.devices if d.kind in (DC_SOURCE, PULSE_SOURCE)]
        for (row, _, _), d in zip(self.sources, devs):
            for nn in d.nodes:
                nodes.append(self.node_index[nn])
                brs.append(row)
        self._src_nodes = np.array(nodes, dtype=int)
        self._src_brs = np.array(brs, dtype=int)
        sa_devs = [d for d in self.netlist.devices if d.kind == SENSEAMP]
        self._sa_out = np.array([self.node_index[d.nodes[2]] for d in sa_devs], dtype=int)
        return self


class _const:
    def __init__(self, v):
        self.v = v

    def __call__(self, t):
        return self.v


class _PulseFn:
    def __init__(self, p):
        self.p = p

    def __call__(self, t):
        return pulse_value(self.p, t)


def compile_netlist(netlist: Netlist, stimulus=None, edge=None) -> MnaSystem:
    return MnaSystem(netlist, stimulus, edge).finalize()


# ------------------------------------------------------------------ Newton

def _newton(system: MnaSystem, x0, cfg: SolverConfig, t=0.0, trace=None, **kw):
    x = np.array(x0, dtype=float)
    nn = system.n_nodes
    update_small = False
    for it in range(cfg.max_newton_iters):
        f, jac, mag = system.assemble(x, t, gmin=cfg.gmin, **kw)
        kcl_ok = np.all(np.abs(f[:nn]) < cfg.abstol + cfg.reltol * mag[:nn])
        br_ok = np.all(np.abs(f[nn:]) < cfg.vntol)
        if trace is not None:
            trace.append((t, it, float(np.max(np.abs(f))) if f.size else 0.0))
        if update_small and kcl_ok and br_ok:
            return x, it
        try:
            dx = solve_linear(jac, -f)
        except SingularMatrix as exc:
            name = system.name_of(exc.index)
            raise SingularMatrix(f"singular MNA matrix at {name!r} (t={t:.6g} s)",
                                 index=exc.index, node=name) from None
        limit = VOLTAGE_STEP_LIMIT
        if it >= DAMPING_START:
            limit *= 0.5 ** ((it - DAMPING_START) // 10 + 1)
        dv = np.clip(dx[:nn], -limit, limit)
        di = dx[nn:]
        x_new = x.copy()
        x_new[:nn] += dv
        x_new[nn:] += di
        update_small = (np.all(np.abs(dv) < cfg.vntol + cfg.reltol * np.abs(x_new[:nn]))
                        and np.all(np.abs(di) < cfg.abstol + cfg.reltol * np.abs(x_new[nn:]))
                        and np.array_equal(dv, dx[:nn]))
        x = x_new
    raise NonConvergence(f"Newton did not converge in {cfg.max_newton_iters} iterations at t={t:.6g} s",
                         time=t, trace=trace or ())


def _robust_dc(system, x0, cfg, force=None, trace=None):
    try:
        return _newton(system, x0, cfg, trace=trace, force=force)[0]
    except (NonConvergence, SingularMatrix) as exc:
        last = exc
    # gmin stepping
    try:
        x = np.array(x0, dtype=float)
        for g in np.geomspace(1e-3, cfg.gmin, cfg.gmin_steps):
            x = _newton(system, x, cfg, trace=trace, force=force, extra_gmin=float(g))[0]
        return _newton(system, x, cfg, trace=trace, force=force)[0]
    except (NonConvergence, SingularMatrix) as exc:
        last = exc
    # source stepping
    try:
        x = np.zeros(system.size)
        for alpha in np.linspace(0.1, 1.0, 10):
            x = _newton(system, x, cfg, trace=trace, force=force, alpha=float(alpha))[0]
        return x
    except (NonConvergence, SingularMatrix) as exc:
        last = exc
    if isinstance(last, SingularMatrix):
        raise last
    raise NonConvergence("DC operating point failed after gmin and source stepping",
                         time=0.0, trace=trace or ())


def _initial_solution(system: MnaSystem, cfg: SolverConfig, initial, release=True):
    trace = []
    x0 = np.zeros(system.size)
    force = None
    if initial:
        unknown = [n for n in initial if n not in system.node_index or n == GROUND]
        if unknown:
            raise ValueError(f"initial conditions name unknown nodes {unknown}")
        force = {system.node_index[n]: float(v) for n, v in initial.items()}
        for k, v in force.items():
            x0[k] = v
        x0 = _robust_dc(system, x0, cfg, force=force, trace=trace)
        if not release:
            return x0, trace
    return _robust_dc(system, x0, cfg, trace=trace), trace


def _op_from_x(system: MnaSystem, x, iterations) -> OperatingPoint:
    volts = {n: float(x[i]) for i, n in enumerate(system.node_names)}
    volts[GROUND] = 0.0
    currents = {f"I({name})": float(x[row]) for row, _, name in system.sources}
    return OperatingPoint(volts, currents, x, iterations)


def dc_operating_point(netlist: Netlist, cfg: SolverConfig | None = None, initial=None) -> OperatingPoint:
    """DC solution of ``netlist``.

    ``initial`` maps node names to voltages that select a state of bistable
    circuits: the nodes are first held through 1 ohm forcing switches, then
    released and re-solved.  ``None`` uses the netlist's ``.ic`` entries;
    pass ``{}`` to ignore them.  Source currents follow the SPICE sign
    convention (positive flowing into the + terminal).
    """
    cfg = cfg or SolverConfig()
    system = compile_netlist(netlist)
    if initial is None:
        initial = netlist.initial_map
    x, trace = _initial_solution(system, cfg, initial)
    return _op_from_x(system, x, len(trace))


def transient(netlist: Netlist, cfg: SolverConfig | None = None, stimulus=None, initial=None,
              uic: bool = False) -> Waveform:
    """Fixed-step transient analysis from the DC state at t = 0.

    ``stimulus`` is any object with ``events`` (``(time, signal, level)``
    triples) and ``edge`` (ramp time); each named signal must be driven by a
    grounded voltage source, whose value it replaces.  Event times must be
    multiples of ``cfg.dt``.  The first step and each step that starts at a
    breakpoint use backward Euler; the rest use ``cfg.integrator``.

    By default the run starts from the released operating point.  With
    ``uic`` it starts from the forced state instead, so capacitors keep
    the charge the initial conditions gave them.
    """
    cfg = cfg or SolverConfig()
    system = compile_netlist(netlist, stimulus)
    if initial is None:
        initial = netlist.initial_map
    dt = cfg.dt
    nsteps = int(math.ceil(cfg.tstop / dt - 1e-9))

    if stimulus is not None:
        _check_alignment(stimulus, dt)
    corners = list(system.breakpoints)
    for pd in system.pulses:
        corners.extend(pulse_breakpoints(pd, cfg.tstop))
    # netlist pulses need not sit on the grid; their corner falls in the
    # step that contains it
    bp_steps = {int(math.floor(tb / dt + 1e-6)) for tb in corners if tb <= cfg.tstop}

    x, _ = _initial_solution(system, cfg, initial, release=not uic)
    vc_prev = np.append(x, 0.0)[system.cap_p] - np.append(x, 0.0)[system.cap_n]
    ic_prev = np.zeros_like(vc_prev)

    out = np.empty((nsteps + 1, system.size))
    out[0] = x
    for k in range(1, nsteps + 1):
        t = k * dt
        be = (k == 1) or ((k - 1) in bp_steps) or cfg.integrator == BACKWARD_EULER
        if be:
            a_coef, hist = 1.0 / dt, np.zeros_like(ic_prev)
        else:
            a_coef, hist = 2.0 / dt, ic_prev
        try:
            x, _ = _newton(system, x, cfg, t=t, caps=(a_coef, vc_prev, hist))
        except NonConvergence as exc:
            raise NonConvergence(f"transient step failed at t={t:.6g} s: {exc}", time=t,
                                 trace=exc.trace) from None
        xe = np.append(x, 0.0)
        vc = xe[system.cap_p] - xe[system.cap_n]
        ic_prev = a_coef * system.cap_c * (vc - vc_prev) - hist
        vc_prev = vc
        out[k] = x

    time = np.arange(nsteps + 1) * dt
    signals = {name: out[:, i].copy() for i, name in enumerate(system.node_names)}
    for row, _, name in system.sources:
        signals[f"I({name})"] = out[:, row].copy()
    return Waveform(time, signals)


def _check_alignment(stimulus, dt):
    edge = getattr(stimulus, "edge", 0.0)
    for t, _, _ in stimulus.events:
        for tt in (t, t + edge) if t > 0 else (t,):
            k = tt / dt
            if abs(k - round(k)) > 1e-6:
                raise ValueError(f"stimulus time {tt:.6g} s is not a multiple of dt={dt:.6g} s")
