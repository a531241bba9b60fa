"""Decay fits, h-variation audits, the test-map energy, and the L-sweep."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import discrete
from .errors import ConfigurationError, PreconditionNotMet
from .fiber import Translates, default_qbar, frame_derivatives, h_prime
from .grids import Field2D, Grid2D, Path1D
from .strip2d import (fiber_actions, fiber_series, hamiltonian_identities, minimize_strip,
                      pde_residual, stay_in_audit, x_derivative)

log = logging.getLogger(__name__)


@dataclass
class DecayFit:
    window: tuple
    rate: float
    prefactor: float
    r2: float
    n: int
    accepted: bool
    trivial: bool = False
    pointwise_ok: bool = True
    barrier_ok: bool = True

    def to_json(self):
        return {"window": list(self.window), "rate": self.rate, "prefactor": self.prefactor, "r2": self.r2,
                "n": self.n, "accepted": self.accepted, "trivial": self.trivial,
                "pointwise_ok": self.pointwise_ok, "barrier_ok": self.barrier_ok}


def loglinear_fit(x, d, min_samples=10, floor=1e-13):
    x, d = np.asarray(x, dtype=float), np.asarray(d, dtype=float)
    mask = d > floor
    if mask.sum() < min_samples:
        return None
    xs, ld = x[mask], np.log(d[mask])
    slope, icpt = np.polyfit(xs, ld, 1)
    pred = slope * xs + icpt
    ss_res = float(np.sum((ld - pred) ** 2))
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), float(np.exp(icpt)), r2, int(mask.sum()), (float(xs[0]), float(xs[-1]))


def fit_q_decay(series, x, mu_hat, p_level, buffer=None, L=None):
    """Log-linear fit of q(x) on [x_p, L/4 - buffer] and the bounds of the exponential-decay lemma."""
    q = np.array([d.q for d in series])
    q1 = np.array([d.q1 for d in series])
    x = np.asarray(x, dtype=float)
    if np.all(q <= 1e-14):
        return DecayFit((float(x[0]), float(x[-1])), float("inf"), 0.0, 1.0, len(x), False, trivial=True)
    inside = np.nonzero(q1 <= p_level)[0]
    if inside.size == 0:
        raise PreconditionNotMet("q1 never drops below the p level")
    x_p = x[inside[0]]
    x_end = x[-1]
    buffer = 2.0 / np.sqrt(mu_hat) if buffer is None else buffer
    mask = (x >= x_p) & (x <= x_end - buffer)
    fit = loglinear_fit(x[mask], q[mask])
    if fit is None:
        return DecayFit((float(x_p), float(x_end - buffer)), float("nan"), float("nan"), 0.0,
                        int(mask.sum()), False)
    rate, K, r2, n, window = fit
    accepted = r2 >= 0.9
    xs, qs = x[mask], q[mask]
    bound = np.sqrt(2.0) * p_level * np.exp(-rate * (xs - x_p))
    pointwise = bool(np.all(qs <= bound * (1.0 + 1e-12)))
    sm = np.sqrt(mu_hat)
    Lq = x_end
    phi = p_level ** 2 * np.cosh(sm * (xs - Lq)) / np.cosh(sm * (x_p - Lq))
    barrier = bool(np.all(qs ** 2 <= phi * (1.0 + 1e-12)))
    return DecayFit(window=(float(x_p), float(x_end - buffer)), rate=rate, prefactor=K, r2=r2, n=n,
                    accepted=accepted, pointwise_ok=pointwise, barrier_ok=barrier)


def fit_y_decay(p, f, side=+1, lo=None, hi=None):
    """Rate of max_x |u(x, y) - a| over y in [Y/2, Y - 1] (or the mirror window)."""
    Y = f.grid.Y
    y = f.grid.y
    lo = Y / 2.0 if lo is None else lo
    hi = Y - 1.0 if hi is None else hi
    if side > 0:
        mask = (y >= lo) & (y <= hi)
        d = np.linalg.norm(f.values[:, mask] - p.a_plus, axis=-1).max(axis=0)
        s = y[mask]
    else:
        mask = (y <= -lo) & (y >= -hi)
        d = np.linalg.norm(f.values[:, mask] - p.a_minus, axis=-1).max(axis=0)
        s = -y[mask]
    fit = loglinear_fit(s, d)
    if fit is None:
        return DecayFit((lo, hi), float("nan"), float("nan"), 0.0, int(mask.sum()), False)
    rate, K, r2, n, window = fit
    return DecayFit(window=tuple(sorted(window)), rate=rate, prefactor=K, r2=r2, n=n, accepted=r2 >= 0.9)


@dataclass
class HVariationReport:
    C_h: float  # max |h(x) - h(x')| over unambiguous fibers
    total_variation: float
    excess_measure: float  # period measure of {x : J(u(x,.)) - c0 > e_p}
    excess_bound: float  # C0 / e_p
    measure_ok: bool
    stable: bool = True
    stability_note: str = "single-L call: stability check skipped"


def h_variation_audit(series, x, fiber_J, c0, ep_estimate, C0, previous=None, rel=0.2, abs_floor=1e-6):
    h = np.array([d.h for d in series])
    ok = np.array([not d.ambiguous for d in series])
    hs = h[ok]
    C_h = float(hs.max() - hs.min()) if hs.size else 0.0
    tv = float(np.abs(np.diff(hs)).sum()) if hs.size > 1 else 0.0
    x = np.asarray(x, dtype=float)
    hx = x[1] - x[0]
    w = discrete.trapezoid_weights(len(x))
    excess = 4.0 * hx * float(np.sum(w * (np.asarray(fiber_J) - c0 > ep_estimate)))
    bound = C0 / ep_estimate
    rep = HVariationReport(C_h=C_h, total_variation=tv, excess_measure=excess, excess_bound=float(bound),
                           measure_ok=bool(excess <= bound))
    if previous is not None:
        diff = abs(C_h - previous.C_h)
        rep.stable = bool(diff <= rel * max(C_h, previous.C_h) + abs_floor)
        rep.stability_note = f"|C_h - C_h(prev)| = {diff:.3g} (tolerance {rel:.0%} + {abs_floor:g})"
    return rep


@dataclass
class TestMapRow:
    x: float
    q: float
    q_hat: float
    folded: bool
    actual: float  # |u_x|^2/2 + J(u(x,.))
    represented: float  # representation formula with q_hat = q
    test: float  # representation formula with the folded q_hat


def _representation(p, dec, ux, hy, qdot, qq):
    """(1/2)(q'^2 + f(q,x)|nu_x|^2) + W_eff(q nu) + c0 for amplitude qq along nu."""
    du, vy = frame_derivatives(dec)
    uy = du + vy
    hp = -discrete.l2_inner(ux, du, hy) / discrete.l2_inner(uy, du, hy)
    vx = ux + hp * uy
    nu = dec.nu.values
    nu_x = (vx - discrete.l2_inner(vx, nu, hy) * nu) / dec.q
    nu_y = vy / dec.q
    a = discrete.l2_inner(nu_x, nu_x, hy)
    b = discrete.l2_inner(nu_x, nu_y, hy)
    den = discrete.l2_inner(du + qq * nu_y, du + qq * nu_y, hy)
    fterm = qq * qq * a - qq ** 4 * b * b / den
    base = Translates(dec.conn).value(dec.fiber.grid.nodes, dec.h)
    J = discrete.chain_energy(p, base + qq * nu, hy)
    return 0.5 * (qdot * qdot + fterm) + J


def testmap_energy(p, f, series, p_level, x_from=None):
    """Per-x energy densities of the field and of the folded test map q_hat = 2p - q on (p, 2p]."""
    ux_all = x_derivative(f)
    hy = f.grid.hy
    x = f.grid.x
    q = np.array([d.q for d in series])
    if x_from is None:
        q1 = np.array([d.q1 for d in series])
        inside = np.nonzero(q1 <= p_level)[0]
        x_from = x[inside[0]] if inside.size else np.inf
    rows = []
    for i, dec in enumerate(series):
        if dec.q <= 0.0 or dec.ambiguous or x[i] < x_from:
            continue
        ux = ux_all[i]
        actual = 0.5 * discrete.l2_inner(ux, ux, hy) + discrete.chain_energy(p, f.values[i], hy)
        folded = bool(p_level < q[i] <= 2.0 * p_level)
        q_hat = 2.0 * p_level - q[i] if folded else q[i]
        qdot = _qdot_exact(dec, ux, hy)
        rep = _representation(p, dec, ux, hy, qdot, q[i])
        test = _representation(p, dec, ux, hy, -qdot if folded else qdot, q_hat)
        rows.append(TestMapRow(x=float(x[i]), q=float(q[i]), q_hat=float(q_hat), folded=folded,
                               actual=float(actual), represented=float(rep), test=float(test)))
    return rows


def _qdot_exact(dec, ux, hy):
    """q'(x) = <v_x, nu> with v_x from the orthogonality-preserving h'."""
    du, vy = frame_derivatives(dec)
    uy = du + vy
    hp = -discrete.l2_inner(ux, du, hy) / discrete.l2_inner(uy, du, hy)
    return discrete.l2_inner(ux + hp * uy, dec.nu.values, hy)


def testmap_violations(rows):
    """Folded rows where the test density fails to undercut the actual one."""
    return [r for r in rows if r.folded and not r.test < r.actual]


# --- sweeps over L --------------------------------------------------------------


def shift_field(f, eta):
    """Vertical translate u(x, y + eta), continued by the end values."""
    y = f.grid.y
    out = np.empty_like(f.values)
    for i in range(f.grid.nx):
        sp = CubicSpline(y, f.values[i], axis=0)
        s = np.clip(y + eta, y[0], y[-1])
        out[i] = sp(s)
    return Field2D(f.grid, out)


def window_distances(fa, fb, l):
    """C0 / C1 / C2 sup distances on [0, l] x [-Y, Y] (shared spacing)."""
    if abs(fa.grid.hx - fb.grid.hx) > 1e-12 or fa.grid.ny != fb.grid.ny:
        raise ConfigurationError("fields must share the grid spacing")
    n = int(round(l / fa.grid.hx)) + 1
    a, b = fa.values[:n], fb.values[:n]
    hx, hy = fa.grid.hx, fa.grid.hy
    d = a - b
    c0 = float(np.abs(d).max())
    c1 = max(float(np.abs(np.diff(d, axis=0)).max()) / hx, float(np.abs(np.diff(d, axis=1)).max()) / hy)
    c2 = max(float(np.abs(np.diff(d, 2, axis=0)).max()) / hx ** 2,
             float(np.abs(np.diff(d, 2, axis=1)).max()) / hy ** 2)
    return c0, c1, c2


def warm_start(prev, grid):
    """Previous reduced solution on the longer domain, continued by its last fiber."""
    u = np.empty((grid.nx, grid.ny, prev.m))
    n = min(prev.grid.nx, grid.nx)
    u[:n] = prev.values[:n]
    u[n:] = prev.values[-1]
    return u


@dataclass
class SweepRow:
    L: float
    action: float
    omega: float
    q_end: float
    h_end: float
    A_max: float
    B_max: float
    pde: float
    dist_c0: float = float("nan")
    dist_c1: float = float("nan")
    dist_c2: float = float("nan")
    q_rate: float = float("nan")
    q_r2: float = float("nan")
    y_rate: float = float("nan")
    C2_vy: float = float("nan")
    hprime_tail: float = float("nan")
    C_h: float = float("nan")

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SweepTable:
    rows: list
    eta: float
    eta_drift: float
    window: float
    solutions: list = field(default_factory=list, repr=False)
    series: list = field(default_factory=list, repr=False)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


def vy_scaling(series):
    """max over fibers of |v_y| / sqrt(q)."""
    vals = []
    for d in series:
        if d.ambiguous or d.q <= 1e-12:
            continue
        vy = discrete.centered_derivative(d.v.values, d.fiber.grid.h)
        vals.append(discrete.l2_norm(vy, d.fiber.grid.h) / np.sqrt(d.q))
    return max(vals) if vals else 0.0


def hprime_tail(f, series, mu_hat, l_p):
    """max over x in [l_p, L/4] of |h'(x)| e^{sqrt(mu)(x - l_p)/4}."""
    ux = x_derivative(f)
    x = f.grid.x
    worst = 0.0
    for i, d in enumerate(series):
        if x[i] < l_p or d.ambiguous:
            continue
        hp = h_prime(d, ux[i]).quotient
        worst = max(worst, abs(hp) * np.exp(0.25 * np.sqrt(mu_hat) * (x[i] - l_p)))
    return worst


def sweep_L(p, conns, L_list, hx=0.1, hy=0.1, cfg=None, mu_hat=None, qbar=None, window=None, solutions=None):
    L_list = [float(L) for L in L_list]
    if len(L_list) < 3 or any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ConfigurationError("L_list must hold at least three increasing values")
    qbar = default_qbar(conns[1]) if qbar is None else qbar
    l = min(L_list) / 4.0 if window is None else window
    rows, sols, sers, normed = [], [], [], []
    prev = None
    for k, L in enumerate(L_list):
        if solutions is not None and k < len(solutions) and solutions[k] is not None:
            sol = solutions[k]
        else:
            grid = Grid2D.from_spacing(L, conns[1].grid.hi, hx, hy)
            u0 = warm_start(prev.field, grid) if prev is not None else None
            sol = minimize_strip(p, conns, L, grid=grid, cfg=cfg, u0=u0)
        f = sol.field
        ser = fiber_series(f, conns, qbar)
        ham = hamiltonian_identities(p, f, conns)
        h_end = ser[-1].h
        g = shift_field(f, h_end) if abs(h_end) > 0 else f
        row = SweepRow(L=L, action=sol.action, omega=ham.omega, q_end=ser[-1].q, h_end=h_end,
                       A_max=ham.A_variation, B_max=ham.omega_tilde_max, pde=pde_residual(p, f))
        if mu_hat is not None:
            fit = fit_q_decay(ser, f.grid.x, mu_hat, qbar)
            row.q_rate, row.q_r2 = fit.rate, fit.r2
            q1 = np.array([d.q1 for d in ser])
            inside = np.nonzero(q1 <= qbar)[0]
            if inside.size:
                row.hprime_tail = hprime_tail(f, ser, mu_hat, f.grid.x[inside[0]])
        row.y_rate = fit_y_decay(p, f).rate
        row.C2_vy = vy_scaling(ser)
        hs = np.array([d.h for d in ser if not d.ambiguous])
        row.C_h = float(hs.max() - hs.min()) if hs.size else 0.0
        if normed:
            row.dist_c0, row.dist_c1, row.dist_c2 = window_distances(normed[-1], g, l)
        rows.append(row)
        sols.append(sol)
        sers.append(ser)
        normed.append(g)
        prev = sol
    eta = rows[-1].h_end
    drift = abs(rows[-1].h_end - rows[-2].h_end)
    return SweepTable(rows=rows, eta=float(eta), eta_drift=float(drift), window=l, solutions=sols, series=sers)
