"""Nearest-translate decomposition of a fiber and the quantities built on it.

A fiber f is written as ``f = u(. - h) + v`` with ``v`` orthogonal (in L2) to
``u'(. - h)``, where ``u`` is the nearer of the two connections.  ``v`` is stored on
the fiber's own nodes (the frame in which f is sampled), so orthogonality and
norms are evaluated with the same quadrature as everything else.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize, minimize_scalar

from . import discrete
from .errors import GuardViolated, PreconditionNotMet
from .grids import Path1D
from .profile1d import Connection, Sign, action_JR, operator_T_spectrum, random_orthogonal_directions

log = logging.getLogger(__name__)

QBAR_CAP = 0.1


class Translates:
    """Smooth evaluation of y -> u(y - r) and its derivatives for a connection.

    Beyond the grid the connection is continued by its (pinned) end values.
    """

    def __init__(self, conn):
        self.conn = conn
        y = conn.grid.nodes
        self.lo, self.hi = y[0], y[-1]
        self.spline = CubicSpline(y, conn.values, axis=0, bc_type="not-a-knot")
        self.left, self.right = conn.values[0], conn.values[-1]

    def _eval(self, s, nu):
        s = np.asarray(s, dtype=float)
        out = self.spline(np.clip(s, self.lo, self.hi), nu)
        if nu == 0:
            out[s < self.lo] = self.left
            out[s > self.hi] = self.right
        else:
            out[(s < self.lo) | (s > self.hi)] = 0.0
        return out

    def value(self, y, r):
        return self._eval(y - r, 0)

    def d1(self, y, r):
        return self._eval(y - r, 1)

    def d2(self, y, r):
        return self._eval(y - r, 2)


@dataclass
class FiberDecomposition:
    sign: Sign
    h: float
    q: float
    q1: float
    v: Path1D
    nu: Path1D
    ambiguous: bool
    orth_residual: float = 0.0
    q_other: float = float("nan")  # distance to the other connection
    h1_shift: float = float("nan")  # shift realizing q1
    newton_ok: bool = True
    conn: Connection = field(default=None, repr=False)
    fiber: Path1D = field(default=None, repr=False)


def _same(conns):
    a, b = conns
    return a is b or (a.values.shape == b.values.shape and np.array_equal(a.values, b.values))


def _orthogonality(f, y, tr, r, h):
    """g(r) = <f - u(.-r), u'(.-r)> and its derivative in r."""
    u, du, d2u = tr.value(y, r), tr.d1(y, r), tr.d2(y, r)
    res = f - u
    g = discrete.l2_inner(res, du, h)
    dg = discrete.l2_inner(du, du, h) - discrete.l2_inner(res, d2u, h)
    return g, dg


def nearest_shift(f, y, tr, h, r_range=None, tol=1e-13, max_newton=50):
    """Coarse scan for the L2-nearest translate, then Newton on the orthogonality equation."""
    extent = y[-1] - y[0]
    lo, hi = r_range if r_range is not None else (-extent / 4.0, extent / 4.0)
    rs = np.arange(lo, hi + 0.5 * h, h)
    d2 = [discrete.l2_inner(f - tr.value(y, r), f - tr.value(y, r), h) for r in rs]
    r = float(rs[int(np.argmin(d2))])
    r_scan = r
    scale = discrete.l2_norm(tr.d1(y, 0.0), h) * max(discrete.l2_norm(f, h), 1.0)
    for _ in range(max_newton):
        g, dg = _orthogonality(f, y, tr, r, h)
        if abs(g) <= tol * scale:
            return r, True
        if dg <= 0.0:
            break
        step = g / dg
        r_new = r - step
        if abs(r_new - r_scan) > 2.0 * h + 1.0:
            break
        r = r_new
    g, _ = _orthogonality(f, y, tr, r, h)
    if abs(g) <= 1e-8 * scale:
        return r, True
    return r_scan, False


def h1_shift(f, y, tr, h, r0, width=2.0):
    def dist(r):
        return discrete.h1_norm(f - tr.value(y, r), h)

    res = minimize_scalar(dist, bounds=(r0 - width, r0 + width), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def decompose(fiber, conns, qbar=QBAR_CAP, r_range=None, tie_tol=1e-9):
    """Nearest-translate decomposition of ``fiber`` against the connection pair (u_-, u_+)."""
    y = fiber.grid.nodes
    h = fiber.grid.h
    f = fiber.values
    if conns[0].grid.n != fiber.grid.n:
        raise PreconditionNotMet("fiber and connections must share the grid")
    single = _same(conns)
    cands = []
    for conn in ((conns[1],) if single else (conns[1], conns[0])):  # plus first
        tr = Translates(conn)
        r, ok = nearest_shift(f, y, tr, h, r_range)
        res = f - tr.value(y, r)
        cands.append((discrete.l2_norm(res, h), r, ok, conn, tr, res))
    best = min(range(len(cands)), key=lambda i: cands[i][0])
    tie = len(cands) == 2 and abs(cands[0][0] - cands[1][0]) <= tie_tol * (1.0 + cands[0][0])
    if tie:
        best = 0
    q, r, ok, conn, tr, v = cands[best]
    q_other = cands[1 - best][0] if len(cands) == 2 else q
    if not ok:
        log.warning("Newton on the shift did not converge; using the scan minimum")
    rh1, q1 = h1_shift(f, y, tr, h, r)
    q1 = max(q1, discrete.h1_norm(v, h)) if q1 < q else q1
    du = tr.d1(y, r)
    orth = abs(discrete.l2_inner(v, du, h)) / max(discrete.l2_norm(du, h) * max(q, 1e-6), 1e-300)
    nu = v / q if q > 0 else np.zeros_like(v)
    sign = Sign.PLUS if (single or conn is conns[1]) else Sign.MINUS
    return FiberDecomposition(sign=sign, h=float(r), q=float(q), q1=float(q1), v=Path1D(fiber.grid, v),
                              nu=Path1D(fiber.grid, nu), ambiguous=bool(tie or q >= qbar or not ok),
                              orth_residual=float(orth), q_other=float(q_other), h1_shift=rh1,
                              newton_ok=ok, conn=conn, fiber=fiber)


@dataclass
class HPrime:
    quotient: float  # <v_x, v_y> / |u' + v_y|^2
    direct: float  # -<u_x, u'> / (|u'|^2 + <v_y, u'>), from differentiating orthogonality
    v_x: np.ndarray = field(repr=False, default=None)
    v_y: np.ndarray = field(repr=False, default=None)
    du: np.ndarray = field(repr=False, default=None)

    @property
    def value(self):
        return self.quotient


def frame_derivatives(dec):
    """u'(. - h) and v_y on the fiber nodes."""
    y = dec.fiber.grid.nodes
    h = dec.fiber.grid.h
    du = Translates(dec.conn).d1(y, dec.h)
    fy = discrete.centered_derivative(dec.fiber.values, h)
    return du, fy - du


def h_prime(dec, fiber_x):
    """h'(x) for a fiber with x-derivative ``fiber_x`` (same nodes)."""
    if dec.ambiguous:
        raise PreconditionNotMet("h' needs an unambiguous decomposition")
    h = dec.fiber.grid.h
    ux = np.asarray(fiber_x.values if isinstance(fiber_x, Path1D) else fiber_x, dtype=float)
    du, vy = frame_derivatives(dec)
    ndu = discrete.l2_norm(du, h)
    if discrete.l2_norm(vy, h) > 0.5 * ndu:
        raise GuardViolated("|v_y| exceeds |u'|/2")
    uy = du + vy
    direct = -discrete.l2_inner(ux, du, h) / discrete.l2_inner(uy, du, h)
    vx = ux + direct * uy  # oblique projection of u_x onto the complement of u'
    quotient = discrete.l2_inner(vx, vy, h) / discrete.l2_inner(uy, uy, h)
    return HPrime(quotient=float(quotient), direct=float(direct), v_x=vx, v_y=vy, du=du)


def effective_potential(p, conn, v):
    vals = v.values if isinstance(v, Path1D) else np.asarray(v, dtype=float).reshape(conn.values.shape)
    return action_JR(p, Path1D(conn.grid, conn.values + vals)) - conn.action


@dataclass
class MonotoneReport:
    passed: bool
    p_values: np.ndarray
    f_values: np.ndarray  # f(p, x) |nu_x|^2
    failing_p: float = float("nan")
    reason: str = ""


def monotone_f_check(dec, fiber_x, samples=50, p_max=None):
    """f(p) |nu_x|^2 = p^2|nu_x|^2 - p^4 <nu_x, nu_y>^2 / |u' + p nu_y|^2 on p in (0, p_max]."""
    h = dec.fiber.grid.h
    ux = np.asarray(fiber_x.values if isinstance(fiber_x, Path1D) else fiber_x, dtype=float)
    if dec.q <= 0.0:
        raise PreconditionNotMet("monotone check needs q > 0")
    du, vy = frame_derivatives(dec)
    uy = du + vy
    hp = -discrete.l2_inner(ux, du, h) / discrete.l2_inner(uy, du, h)
    vx = ux + hp * uy
    nu = dec.nu.values
    qx = discrete.l2_inner(vx, nu, h)
    nu_x = (vx - qx * nu) / dec.q
    nu_y = vy / dec.q
    a = discrete.l2_inner(nu_x, nu_x, h)
    b = discrete.l2_inner(nu_x, nu_y, h)
    p_max = dec.q if p_max is None else p_max
    ps = np.linspace(p_max / samples, p_max, samples)
    vals = np.array([pp * pp * a - pp ** 4 * b * b / discrete.l2_inner(du + pp * nu_y, du + pp * nu_y, h)
                     for pp in ps])
    tol = 1e-12 * (1.0 + np.abs(vals).max())
    neg = np.nonzero(vals < -tol)[0]
    dec_ = np.nonzero(np.diff(vals) < -tol)[0]
    if neg.size:
        return MonotoneReport(False, ps, vals, float(ps[neg[0]]), "negative")
    if dec_.size:
        return MonotoneReport(False, ps, vals, float(ps[dec_[0] + 1]), "decreasing")
    return MonotoneReport(True, ps, vals)


def calibrate_C1(v_list, h):
    """(1.5 max|v'|)^(1/3): the sharp constant for |v| <= C1 |v|_L2^(2/3) when |v'| <= max|v'|."""
    dmax = max(float(np.abs(np.diff(np.asarray(v).reshape(len(v), -1), axis=0)).max()) / h
               for v in v_list)
    return (1.5 * dmax) ** (1.0 / 3.0)


@dataclass
class LinftyReport:
    passed: bool
    lhs: float  # max |v|
    rhs: float  # C1 |v|^(2/3)


def linfty_interpolation_check(v, C1):
    vals = v.values
    lhs = float(np.linalg.norm(vals, axis=1).max())
    rhs = C1 * discrete.l2_norm(vals, v.grid.h) ** (2.0 / 3.0)
    return LinftyReport(passed=bool(lhs <= rhs * (1.0 + 1e-12)), lhs=lhs, rhs=float(rhs))


def calibrate_C_tilde(conn, n=50, amplitude=0.05, seed=0):
    """Fit C in |h_L2 - h_H1| <= C q1 on random perturbations of translates."""
    rng = np.random.default_rng(seed)
    y, h = conn.grid.nodes, conn.grid.h
    tr = Translates(conn)
    s = (y - y[0]) / (y[-1] - y[0])
    worst = 0.0
    for _ in range(n):
        r = rng.uniform(-1.0, 1.0)
        w = np.zeros_like(conn.values)
        for c in range(w.shape[1]):
            for k in range(1, 9):
                w[:, c] += rng.standard_normal() / k * np.sin(np.pi * k * s)
        w *= amplitude * rng.uniform(0.2, 1.0) / discrete.h1_norm(w, h)
        f = tr.value(y, r) + w
        r0, _ = nearest_shift(f, y, tr, h, (r - 1.0, r + 1.0))
        r1, q1 = h1_shift(f, y, tr, h, r0)
        worst = max(worst, abs(r0 - r1) / q1)
    return worst


def default_qbar(conn, C_tilde=None):
    C_tilde = calibrate_C_tilde(conn) if C_tilde is None else C_tilde
    ndu = discrete.l2_norm(conn.derivative(), conn.grid.h)
    return min(QBAR_CAP, ndu / (3.0 * C_tilde)) if C_tilde > 0 else QBAR_CAP


@dataclass
class EpEstimate:
    value: float  # J(u*) - c0 at the penalized minimizer (an upper estimate of e_p)
    q1: float  # H1 distance of the minimizer from the translates
    rho: float
    active: bool  # constraint active to 1%
    path: Path1D = field(repr=False, default=None)


def _q1_and_grad(u, y, h, trs, r_prev):
    """min over connections and shifts of |u - u_c(.-r)|_H1, with its gradient in u."""
    best = None
    for i, tr in enumerate(trs):
        r0 = r_prev[i]
        res = minimize_scalar(lambda r: discrete.h1_norm(u - tr.value(y, r), h),
                              bounds=(r0 - 1.0, r0 + 1.0), method="bounded", options={"xatol": 1e-10})
        r = float(res.x)
        r_prev[i] = r
        if best is None or res.fun < best[0]:
            best = (float(res.fun), r, tr)
    q1, r, tr = best
    d = u - tr.value(y, r)
    # gradient of the H1 norm of d (envelope theorem in r)
    w = discrete.trapezoid_weights(len(d))
    g = h * w[:, None] * d
    dd = np.diff(d, axis=0) / h
    g[:-1] -= dd
    g[1:] += dd
    return q1, g / max(q1, 1e-300)


def estimate_ep(p, conns, pval, grid=None, rho0=10.0, rho_max=1e8, tol=0.01, seed=0):
    """Upper estimate of e_p = inf{J(u) - c0 : q1(u) >= p} by a quadratic penalty."""
    if pval <= 0.0:
        raise PreconditionNotMet("pval must be positive")
    conn = conns[1]
    if grid is not None and grid.n != conn.grid.n:
        raise PreconditionNotMet("estimate_ep expects connections on the given grid")
    grid = conn.grid
    y, h = grid.nodes, grid.h
    c0 = min(c.action for c in conns)
    trs = [Translates(c) for c in ((conn,) if _same(conns) else conns)]
    spec = operator_T_spectrum(p, conn, n_eigs=3)
    mode = np.zeros_like(conn.values)
    mode[1:-1] = spec.eigenvectors[:, 1].reshape(-1, p.m)
    mode /= discrete.h1_norm(mode, h)
    u = conn.values + 1.05 * pval * mode
    n_int, m = grid.n - 2, p.m
    ends = (conn.values[0], conn.values[-1])
    r_prev = [0.0] * len(trs)

    def full(z):
        out = np.empty((grid.n, m))
        out[0], out[-1] = ends
        out[1:-1] = z.reshape(n_int, m)
        return out

    rho = rho0
    z = u[1:-1].ravel()
    while True:
        def fg(z):
            uu = full(z)
            J = discrete.chain_energy(p, uu, h)
            gJ = discrete.chain_gradient(p, uu, h)
            q1, gq = _q1_and_grad(uu, y, h, trs, r_prev)
            slack = pval - q1
            if slack > 0:
                J += rho * slack * slack
                gJ = gJ - 2.0 * rho * slack * gq
            return J, gJ[1:-1].ravel()

        res = minimize(fg, z, jac=True, method="L-BFGS-B",
                       options={"maxiter": 20000, "maxcor": 20, "gtol": 1e-10, "ftol": 1e-15})
        z = res.x
        uu = full(z)
        q1, _ = _q1_and_grad(uu, y, h, trs, r_prev)
        active = q1 >= (1.0 - tol) * pval
        if active or rho >= rho_max:
            break
        rho *= 10.0
    value = action_JR(p, Path1D(grid, uu)) - c0
    if not active:
        log.warning("e_p penalty never activated the constraint (q1=%.3g < p=%.3g)", q1, pval)
    return EpEstimate(value=float(value), q1=float(q1), rho=rho, active=bool(active), path=Path1D(grid, uu))


def q1_gradient_check(conns, n_dirs=20, seed=0, amplitude=0.1, shift=0.2, eps=1e-6):
    """Gradient check of the H1 distance to the translates (the e_p constraint functional).

    Rough random directions have H1 norms of order h^(-1/2), so the step is kept
    small to stay inside the region where q1 is smooth.
    """
    conn = conns[1]
    y, h = conn.grid.nodes, conn.grid.h
    trs = [Translates(c) for c in ((conn,) if _same(conns) else conns)]
    nu = random_orthogonal_directions(conn, 1, seed=seed + 1)[0]
    u0 = Translates(conn).value(y, shift) + amplitude * nu
    shape = u0.shape

    def fun(z):
        return _q1_and_grad(z.reshape(shape), y, h, trs, [0.0] * len(trs))[0]

    def grad(z):
        return _q1_and_grad(z.reshape(shape), y, h, trs, [0.0] * len(trs))[1].ravel()

    return discrete.gradient_check(fun, grad, u0.ravel(), n_dirs, seed, eps=eps)
