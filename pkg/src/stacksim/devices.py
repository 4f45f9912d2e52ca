"""Compact MOS model and series-stack leakage solver.

The drain current uses a single-piece interpolation between weak and strong
inversion (EKV style).  With ``F(x) = ln^2(1 + exp(x / 2))``::

    v_p = (v_gb - vth0 + eta_dibl * |v_db - v_sb|) / n_slope
    i_d = 2 n kp (W/L) vt^2 * (F((v_p - v_sb)/vt) - F((v_p - v_db)/vt))
          * (1 + lambda_clm * |v_db - v_sb|)

P-channel devices are evaluated by negating every terminal voltage and the
result.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

NMOS = "nmos"
PMOS = "pmos"


@dataclass(frozen=True)
class MosParams:
    polarity: str = NMOS
    vth0: float = 0.4
    kp: float = 200e-6
    n_slope: float = 1.5
    eta_dibl: float = 0.05
    lambda_clm: float = 0.05
    w_over_l: float = 1.0
    temp_vt: float = 0.02585

    def __post_init__(self):
        if self.polarity not in (NMOS, PMOS):
            raise ValueError(f"polarity must be {NMOS!r} or {PMOS!r}, got {self.polarity!r}")
        values = (self.vth0, self.kp, self.n_slope, self.eta_dibl,
                  self.lambda_clm, self.w_over_l, self.temp_vt)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("MOS parameters must be finite")
        if self.kp <= 0 or self.w_over_l <= 0 or self.temp_vt <= 0:
            raise ValueError("kp, w_over_l and temp_vt must be positive")
        if self.n_slope < 1:
            raise ValueError("n_slope must be >= 1")
        if self.eta_dibl < 0 or self.lambda_clm < 0:
            raise ValueError("eta_dibl and lambda_clm must be non-negative")
        if self.vth0 <= 0:
            raise ValueError("vth0 is a magnitude and must be positive")

    @property
    def sign(self) -> float:
        return 1.0 if self.polarity == NMOS else -1.0

    def sized(self, w_over_l: float) -> "MosParams":
        return replace(self, w_over_l=w_over_l)


DEFAULT_NMOS = MosParams(NMOS, vth0=0.4, kp=200e-6)
DEFAULT_PMOS = MosParams(PMOS, vth0=0.4, kp=80e-6)


def _softplus(x):
    # ln(1 + exp(x)) without overflow for any finite x
    return np.logaddexp(0.0, x)


def _n_frame(p: MosParams, v_g, v_d, v_s, v_b):
    """Pieces of the n-channel evaluation shared by current and derivatives."""
    vt2 = 2.0 * p.temp_vt
    v_ds = np.subtract(v_d, v_s)
    a_ds = np.abs(v_ds)
    sgn = np.sign(v_ds)
    v_p = (np.subtract(v_g, v_b) - p.vth0 + p.eta_dibl * a_ds) / p.n_slope
    x_f = (v_p - np.subtract(v_s, v_b)) / vt2
    x_r = (v_p - np.subtract(v_d, v_b)) / vt2
    return vt2, a_ds, sgn, x_f, x_r


def _scale(p: MosParams) -> float:
    return 2.0 * p.n_slope * p.kp * p.w_over_l * p.temp_vt ** 2


def _n_current(p: MosParams, v_g, v_d, v_s, v_b):
    _, a_ds, _, x_f, x_r = _n_frame(p, v_g, v_d, v_s, v_b)
    i_f = _softplus(x_f) ** 2
    i_r = _softplus(x_r) ** 2
    return _scale(p) * (i_f - i_r) * (1.0 + p.lambda_clm * a_ds)


def _n_conductances(p: MosParams, v_g, v_d, v_s, v_b):
    vt2, a_ds, sgn, x_f, x_r = _n_frame(p, v_g, v_d, v_s, v_b)
    l_f, l_r = _softplus(x_f), _softplus(x_r)
    d_f = 2.0 * l_f * expit(x_f)  # d(i_f)/d(x_f)
    d_r = 2.0 * l_r * expit(x_r)
    clm = 1.0 + p.lambda_clm * a_ds
    diff = l_f ** 2 - l_r ** 2
    k = _scale(p)
    n = p.n_slope
    dib = p.eta_dibl * sgn / n

    # d(x_f), d(x_r) with respect to (g, d, s), times vt2
    g_m = k * clm * (d_f - d_r) / (n * vt2)
    g_ds = k * (clm * (d_f * dib - d_r * (dib - 1.0)) / vt2 + diff * p.lambda_clm * sgn)
    g_ms = k * (clm * (d_f * (-dib - 1.0) + d_r * dib) / vt2 - diff * p.lambda_clm * sgn)
    return g_m, g_ds, g_ms


def mos_current(p: MosParams, v_g, v_d, v_s, v_b):
    """Drain current in amperes (positive flowing into the drain terminal)."""
    if p.polarity == NMOS:
        return _n_current(p, v_g, v_d, v_s, v_b)
    return -_n_current(p, np.negative(v_g), np.negative(v_d),
                       np.negative(v_s), np.negative(v_b))


def mos_conductances(p: MosParams, v_g, v_d, v_s, v_b):
    """Partial derivatives ``(dI/dv_g, dI/dv_d, dI/dv_s)`` of :func:`mos_current`.

    The bulk derivative is ``-(g_m + g_ds + g_ms)`` because the current only
    depends on terminal voltage differences.
    """
    if p.polarity == NMOS:
        return _n_conductances(p, v_g, v_d, v_s, v_b)
    # I_p(v) = -I_n(-v)  =>  dI_p/dv = dI_n/dv evaluated at -v
    return _n_conductances(p, np.negative(v_g), np.negative(v_d),
                           np.negative(v_s), np.negative(v_b))


class StackConvergenceError(RuntimeError):
    pass


def stack_leakage(p: MosParams, n_series: int, v_total: float,
                  max_iter: int = 200, tol: float = 1e-15):
    """Off-current of ``n_series`` identical devices in series.

    All gates and bulks sit at the bottom source rail (the worst-case off
    stack).  For n-channel cards the bottom rail is 0 V and the top drain is
    at ``v_total``; p-channel cards are mirrored (rail at ``v_total``).

    Returns ``(leakage, mid_nodes)`` where ``mid_nodes`` lists the
    intermediate node voltages from bottom to top and ``leakage`` is the
    current magnitude common to every device.
    """
    if n_series < 1:
        raise ValueError("n_series must be >= 1")
    # Work in the n-channel frame; a p-channel stack is its mirror image.
    q = replace(p, polarity=NMOS)
    m = n_series - 1
    if m == 0:
        return float(_n_current(q, 0.0, v_total, 0.0, 0.0)), []

    nodes = np.zeros(n_series + 1)
    nodes[-1] = v_total
    # Each lower node only needs a few thermal voltages to choke the device
    # above it, so start close to ground.
    nodes[1:-1] = np.linspace(0.0, 0.1 * v_total, n_series + 1)[1:-1]

    def currents(v):
        return _n_current(q, 0.0, v[1:], v[:-1], 0.0)

    for _ in range(max_iter):
        i_dev = currents(nodes)
        resid = i_dev[1:] - i_dev[:-1]  # KCL at each mid node
        # absolute bound plus a relative one so tiny stacks still converge fully
        if np.max(np.abs(resid)) < min(tol, 1e-10 * np.max(np.abs(i_dev))):
            break
        _, g_ds, g_ms = _n_conductances(q, 0.0, nodes[1:], nodes[:-1], 0.0)
        # d(resid_j)/d(node_k) for mid node j = 1..m
        jac = np.zeros((m, m))
        for j in range(m):
            jac[j, j] = g_ms[j + 1] - g_ds[j]
            if j > 0:
                jac[j, j - 1] = -g_ms[j]
            if j < m - 1:
                jac[j, j + 1] = g_ds[j + 1]
        step = np.linalg.solve(jac, -resid)
        step = np.clip(step, -0.1, 0.1)
        nodes[1:-1] = np.clip(nodes[1:-1] + step, 0.0, v_total)
    else:
        raise StackConvergenceError(
            f"stack of {n_series} did not converge, residual {np.max(np.abs(resid)):.3e} A")

    i_dev = currents(nodes)
    if p.polarity == PMOS:
        mids = [float(v_total - v) for v in nodes[1:-1]]
    else:
        mids = [float(v) for v in nodes[1:-1]]
    return float(i_dev[0]), mids
