"""Equivariant brake orbits of u'' = W_u(u) by minimizing the period action.

An orbit in the admissible class satisfies ``u(-t) = R u(t)`` and
``u(T/4 + t) = u(T/4 - t)``, where R is the reflection exchanging a_- and a_+.
It is therefore determined by its restriction to the quarter [0, T/4], with
``u(0)`` in the fixed plane of R and a natural (free) end at T/4.  On the quarter
the discrete action uses half trapezoid weights at both ends, and unfolding is
exact: the full-period action is four times the quarter action.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipkm1

from . import discrete
from .errors import (ConfigurationError, ConstraintActive, PreconditionNotMet,
                     SmallnessFails)
from .grids import FreeMap, Grid1D, Path1D
from .optim import MinimizeConfig, newton_minimize
from .potential import Kind, _eigenbasis, sigma_and_M, sphere_points
from .profile1d import minus_basis

log = logging.getLogger(__name__)

T_MIN = 4.0


@dataclass
class BrakeOrbit:
    quarter: Path1D
    T: float
    action: float
    energy_constant: float  # -W(u(T/4))
    ball_radius_M: float
    C0: float
    reflection: np.ndarray = field(repr=False, default=None)
    iters: int = 0
    initial_action: float = float("nan")
    history: list = field(default_factory=list, repr=False)
    max_abs: float = float("nan")
    grad_norm: float = float("nan")
    finite_time_contact: bool = False

    @property
    def turning_point(self):
        return self.quarter.values[-1]

    def unfold(self):
        return unfold(self.quarter, self.reflection)


def unfold(quarter, R):
    """Samples of one period, t in [-T/4, 3T/4], from the quarter [0, T/4]."""
    u = quarter.values
    n = len(u)
    left = (u[1:] @ R.T)[::-1]  # u(-s) = R u(s)
    mirror = u[-2::-1]  # u(T/4 + s) = u(T/4 - s)
    last = u[1:] @ R.T  # u(T/2 + s) = u(-s)
    vals = np.concatenate([left, u, mirror, last])
    t = quarter.grid.h * (np.arange(len(vals)) - (n - 1))
    return t, vals


def action_J0T(p, quarter, T=None):
    """Period action, four times the quarter quadrature."""
    if T is not None and abs(quarter.grid.hi - quarter.grid.lo - T / 4.0) > 1e-9 * T:
        raise ConfigurationError("quarter grid must span [0, T/4]")
    return 4.0 * discrete.chain_energy(p, quarter.values, quarter.grid.h)


def action_unfolded(p, t, vals):
    """Trapezoid action of a sampled full period (first and last samples coincide)."""
    h = t[1] - t[0]
    return discrete.chain_energy(p, vals, h)


def tilde_u(p, grid, R=None):
    """Explicit comparison map: linear ramp on [0, 1], then a_+."""
    t = grid.nodes
    s = np.clip(t, 0.0, 1.0)
    mid = 0.5 * (p.a_plus + p.a_minus)
    return Path1D(grid, mid + s[:, None] * 0.5 * (p.a_plus - p.a_minus))


def C0_brake(p, n=20001):
    """J_(0,T) of the comparison map: two ramps over [-1, 1]; independent of T >= 4."""
    t = np.linspace(-1.0, 1.0, n)
    u = 0.5 * (p.a_plus + p.a_minus) + t[:, None] * 0.5 * (p.a_plus - p.a_minus)
    kin = 0.5 * float(np.sum((0.5 * (p.a_plus - p.a_minus)) ** 2))
    return 2.0 * (2.0 * kin + float(np.trapezoid(p.W(u), t)))


def brake_M(p, C0):
    r_lo = 2.0 * max(np.linalg.norm(p.a_plus), np.linalg.norm(p.a_minus))
    r_max = 2.0 * r_lo
    for _ in range(30):
        try:
            return sigma_and_M(p, C0, r_max)[1]
        except Exception:
            r_max *= 2.0
    return sigma_and_M(p, C0, r_max)[1]


def initial_brake_guess(p, grid, channel_hint=+1, amplitude=0.5):
    """Smoothed step a_- -> a_+ on the quarter, plus a gamma-odd bump for channel selection."""
    t = grid.nodes
    mid = 0.5 * (p.a_plus + p.a_minus)
    u = mid + np.tanh(t)[:, None] * 0.5 * (p.a_plus - p.a_minus)
    if p.kind is not Kind.SCALAR_QUARTIC:
        B = minus_basis(p)
        if B.shape[1]:
            u = u + channel_hint * amplitude / np.cosh(t)[:, None] * B[:, 0]
    return u


def brake_map(p, n, R):
    return FreeMap(n, p.m, {}, plane=[0], basis=_eigenbasis(R, +1.0))


def quarter_grid(T, h):
    if T < T_MIN:
        raise ConfigurationError(f"T={T} is below T_min={T_MIN}")
    return Grid1D.from_spacing(0.0, T / 4.0, h)


def minimize_brake(p, T, grid=None, cfg=None, h=0.01, channel_hint=+1, u0=None, check_step1=True):
    cfg = cfg or MinimizeConfig()
    grid = grid or quarter_grid(T, h)
    if abs(grid.hi - grid.lo - T / 4.0) > 1e-9 * T or grid.lo != 0.0:
        raise ConfigurationError("quarter grid must span [0, T/4]")
    if T < T_MIN:
        raise ConfigurationError(f"T={T} is below T_min={T_MIN}")
    R = p.brake_reflection()
    C0 = C0_brake(p)
    M = brake_M(p, C0)
    fm = brake_map(p, grid.n, R)
    hh, m = grid.h, p.m
    u0 = initial_brake_guess(p, grid, channel_hint) if u0 is None else np.asarray(u0, dtype=float)

    def fun_grad(z):
        u = fm.full(z).reshape(-1, m)
        return 4.0 * discrete.chain_energy(p, u, hh), 4.0 * fm.grad(discrete.chain_gradient(p, u, hh).ravel())

    def hess(z):
        return 4.0 * fm.hess(discrete.chain_hessian(p, fm.full(z).reshape(-1, m), hh))

    def project(z):
        u = fm.full(z).reshape(-1, m)
        r = np.linalg.norm(u, axis=1)
        if r.max() <= 2.0 * M:
            return z
        u = u * np.minimum(1.0, 2.0 * M / np.maximum(r, 1e-300))[:, None]
        return fm.reduce(u.ravel())

    def step1(z, f):
        if check_step1 and f <= C0:
            mx = float(np.linalg.norm(fm.full(z).reshape(-1, m), axis=1).max())
            if mx > M * (1.0 + 1e-12):
                raise ConstraintActive(f"iterate with action {f:.6g} <= C0 has max|u| = {mx:.6g} > M = {M:.6g}")

    z0 = fm.reduce(u0.ravel())
    f0 = fun_grad(project(z0))[0]
    res = newton_minimize(fun_grad, hess, z0, cfg, project=project, callback=step1, mass=4.0 * hh)
    u = fm.full(res.z).reshape(-1, m)
    quarter = Path1D(grid, u)
    mx = float(np.linalg.norm(u, axis=1).max())
    if mx > M * (1.0 + 1e-9):
        raise ConstraintActive(f"max|u| = {mx:.6g} exceeds M = {M:.6g}")
    orbit = BrakeOrbit(quarter=quarter, T=float(T), action=float(res.f),
                       energy_constant=-float(p.W(u[-1])), ball_radius_M=float(M), C0=float(C0),
                       reflection=R, iters=res.iters, initial_action=float(f0), history=res.history,
                       max_abs=mx, grad_norm=res.grad_norm)
    # Remark 2: contact with a minimum strictly inside (0, T/2)
    d = np.minimum(np.linalg.norm(u - p.a_plus, axis=1), np.linalg.norm(u - p.a_minus, axis=1))
    orbit.finite_time_contact = bool(np.any(d[1:] <= 1e-10))
    if orbit.finite_time_contact:
        log.info("FiniteTimeContact: orbit is within 1e-10 of a minimum inside (0, T/2)")
    return orbit


def brake_gradient_check(p, T, h=0.01, n_dirs=20, seed=0, noise=0.05):
    """Worst relative error of the quarter-domain J_(0,T) gradient in random free directions."""
    grid = quarter_grid(T, h)
    fm = brake_map(p, grid.n, p.brake_reflection())
    m = p.m
    rng = np.random.default_rng(seed)
    z = fm.reduce(initial_brake_guess(p, grid).ravel())
    z = z + noise * rng.standard_normal(z.shape)

    def fun(z):
        return 4.0 * discrete.chain_energy(p, fm.full(z).reshape(-1, m), grid.h)

    def grad(z):
        return 4.0 * fm.grad(discrete.chain_gradient(p, fm.full(z).reshape(-1, m), grid.h).ravel())

    return discrete.gradient_check(fun, grad, z, n_dirs, seed)


def energy_residual(p, orbit):
    """max over interior nodes of |u'|^2/2 - W(u) + W(u(T/4))|."""
    u, h = orbit.quarter.values, orbit.quarter.grid.h
    du = (u[2:] - u[:-2]) / (2.0 * h)
    r = 0.5 * np.sum(du * du, axis=1) - p.W(u[1:-1]) + p.W(u[-1])
    return float(np.abs(r).max())


def el_residual(p, orbit, stencil=3):
    """max interior |u'' - W_u(u)|.

    ``stencil=3`` is the scheme's own second difference (at roundoff for a
    converged discrete minimizer); ``stencil=5`` uses the fourth-order difference,
    so it measures the O(h^2) distance of the discrete orbit from a true solution.
    Interior nodes are taken on the unfolded orbit, so both ends are covered.
    """
    q = orbit.quarter if hasattr(orbit, "quarter") else orbit
    h = q.grid.h
    R = orbit.reflection if hasattr(orbit, "reflection") else np.eye(q.m)
    _, u = unfold(q, R)
    n = len(q.values)
    if stencil == 3:
        d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
        core = u[1:-1]
    elif stencil == 5:
        d2 = (-u[4:] + 16.0 * u[3:-1] - 30.0 * u[2:-2] + 16.0 * u[1:-3] - u[:-4]) / (12.0 * h * h)
        core = u[2:-2]
    else:
        raise ConfigurationError("stencil must be 3 or 5")
    r = np.linalg.norm(d2 - p.grad(core), axis=1)
    off = (stencil - 1) // 2
    # restrict to the samples of the quarter itself, t in [0, T/4]
    i0 = (n - 1) - off
    return float(r[i0:i0 + n].max())


def period_amplitude_oracle(p, T, tol=1e-14):
    """Scalar quartic turning value u_max for period T.

    T/4 = int_0^u_max du / sqrt(2 (W(u) - W(u_max))), which for W = (1 - u^2)^2 / 4
    reduces (u = u_max sin th) to sqrt(2 / (2 - u_max^2)) K(k^2) with
    k^2 = u_max^2 / (2 - u_max^2); it is inverted by bisection in log(1 - u_max).
    """
    if p.kind is not Kind.SCALAR_QUARTIC:
        raise ConfigurationError("the period-amplitude oracle is for the scalar quartic")

    def quarter_period(log_eps):
        umax = 1.0 - np.exp(log_eps)
        one_minus_k2 = 2.0 * (1.0 - umax * umax) / (2.0 - umax * umax)
        return np.sqrt(2.0 / (2.0 - umax * umax)) * ellipkm1(one_minus_k2)

    lo, hi = -700.0, np.log(1.0 - 1e-6)
    target = T / 4.0
    if quarter_period(hi) > target:
        raise ConfigurationError("T is below the small-amplitude limit of the oracle")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if quarter_period(mid) > target:
            lo = mid
        else:
            hi = mid
    return 1.0 - np.exp(0.5 * (lo + hi))


def confinement_check(orbit, q, a=None, p=None):
    """Smallest tau with |u(t) - a| < q on [tau, T/2 - tau]; None if the band is never reached."""
    u, t = orbit.quarter.values, orbit.quarter.grid.nodes
    if a is None:
        a = p.a_plus if p is not None else np.sign(u[-1]) * np.ones_like(u[-1])
    d = np.linalg.norm(u - a, axis=1)
    outside = np.nonzero(d >= q)[0]
    if outside.size == 0:
        return 0.0
    last = int(outside[-1])
    if last == len(t) - 1:
        return None
    return float(t[last + 1])


# --- Lemma 1: excursion replacement ---------------------------------------------


def delta_qq(q, q_prime, C0):
    return (q - q_prime) ** 2 / C0


def W_M_sampled(p, a, s, n_dirs=256, n_rad=16):
    if s <= 0.0:
        return 0.0
    dirs = sphere_points(p.m, n_dirs)
    rad = np.linspace(0.0, s, n_rad)
    pts = a + rad[:, None, None] * dirs[None]
    return float(p.W(pts).max())


def W_m_sampler(p, M_prime, n_cloud=400, n_dirs=256):
    """Returns s -> min{W(u): |u - a_-/+| >= s, |u| < M'} from a sample cloud."""
    if p.m == 1:
        cloud = np.linspace(-M_prime, M_prime, 20 * n_cloud + 1)[:, None]
    else:
        axes = [np.linspace(-M_prime, M_prime, n_cloud)] * p.m if p.m <= 2 else None
        if axes is not None:
            cloud = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.m)
        else:
            rng = np.random.default_rng(0)
            cloud = rng.uniform(-M_prime, M_prime, (200000, p.m))
    cloud = cloud[np.linalg.norm(cloud, axis=1) < M_prime]
    dist = np.minimum(np.linalg.norm(cloud - p.a_minus, axis=1), np.linalg.norm(cloud - p.a_plus, axis=1))
    Wc = p.W(cloud)
    order = np.argsort(dist)[::-1]
    # suffix minimum over decreasing distance: min W among points with dist >= s
    dist_sorted = dist[order]
    run_min = np.minimum.accumulate(Wc[order])
    dirs = sphere_points(p.m, n_dirs)

    def W_m(s):
        k = np.searchsorted(-dist_sorted, -s, side="right")
        best = run_min[k - 1] if k > 0 else np.inf
        for a, b in ((p.a_minus, p.a_plus), (p.a_plus, p.a_minus)):
            ring = a + s * dirs
            ok = (np.linalg.norm(ring - b, axis=1) >= s) & (np.linalg.norm(ring, axis=1) < M_prime)
            if ok.any():
                best = min(best, float(p.W(ring[ok]).min()))
        return float(best)

    return W_m


@dataclass
class SmallnessTest:
    lhs: float  # q'^2 / (2 delta) + delta W_M(q')
    rhs: float  # int_{q'}^{q} sqrt(2 W_m(s)) ds
    delta: float

    @property
    def passed(self):
        return self.lhs < self.rhs


def smallness_test(p, q, q_prime, C0, M_prime, a=None, n_quad=200):
    a = p.a_plus if a is None else a
    delta = delta_qq(q, q_prime, C0)
    lhs = 0.5 * q_prime ** 2 / delta + delta * W_M_sampled(p, a, q_prime)
    W_m = W_m_sampler(p, M_prime)
    s = np.linspace(q_prime, q, n_quad)
    rhs = float(np.trapezoid(np.sqrt(2.0 * np.array([W_m(si) for si in s])), s))
    return SmallnessTest(lhs=float(lhs), rhs=rhs, delta=float(delta))


@dataclass
class ClampResult:
    path: Path1D
    action_delta: float
    delta: float
    tau: tuple  # (tau_1, tilde_tau_1, tilde_tau_2, tau_2)
    test: SmallnessTest


def clamp_excursion(p, path, q, q_prime, a=None, C0=None):
    """Replace an excursion |u - a| >= q between q'-contacts by ramps into a (Lemma 1)."""
    a = p.a_plus if a is None else np.asarray(a, dtype=float)
    u, t, h = path.values, path.grid.nodes, path.grid.h
    if not 0.0 < q_prime < q:
        raise PreconditionNotMet("need 0 < q' < q")
    d = np.linalg.norm(u - a, axis=1)
    ts = int(np.argmax(d))
    if d[ts] < q:
        raise PreconditionNotMet("no excursion reaching q")
    before = np.nonzero(d[:ts] <= q_prime)[0]
    after = np.nonzero(d[ts:] <= q_prime)[0]
    if before.size == 0 or after.size == 0:
        raise PreconditionNotMet("the excursion is not flanked by q'-contacts")
    t1, t2 = int(before[-1]), ts + int(after[0])
    tt1 = t1 + int(np.nonzero(d[t1:ts + 1] >= q)[0][0])
    tau1 = int(np.nonzero(d[t1:tt1] <= q_prime)[0][-1]) + t1
    tt2 = ts + int(np.nonzero(d[ts:t2 + 1] >= q)[0][-1])
    tau2 = tt2 + int(np.nonzero(d[tt2:t2 + 1] <= q_prime)[0][0])
    J_u = discrete.chain_energy(p, u, h)
    C0 = J_u if C0 is None else C0
    M_prime = float(np.linalg.norm(u, axis=1).max()) * (1.0 + 1e-9)
    test = smallness_test(p, q, q_prime, C0, M_prime, a)
    if not test.passed:
        raise SmallnessFails("q' too large for the excursion lemma", test.lhs, test.rhs)
    delta = test.delta
    T1, T2 = t[tau1], t[tau2]
    if 2.0 * delta > T2 - T1:
        raise PreconditionNotMet("ramps of width delta do not fit between the contacts")
    v = u.copy()
    inner = (t > T1) & (t < T2)
    up = inner & (t < T1 + delta)
    down = inner & (t > T2 - delta)
    mid = inner & ~up & ~down
    v[mid] = a
    v[up] = u[tau1] - (u[tau1] - a) * ((t[up] - T1) / delta)[:, None]
    v[down] = u[tau2] - (u[tau2] - a) * ((T2 - t[down]) / delta)[:, None]
    J_v = discrete.chain_energy(p, v, h)
    return ClampResult(path=Path1D(path.grid, v), action_delta=float(J_v - J_u), delta=float(delta),
                       tau=(float(T1), float(t[tt1]), float(t[tt2]), float(T2)), test=test)


# --- sweeps ----------------------------------------------------------------------


@dataclass
class SweepRow:
    T: float
    action: float
    W_turn: float
    tau_q: float
    window_dist: float  # to the discrete reference connection
    tanh_dist: float  # to tanh(t/sqrt 2) (scalar quartic only)
    energy_residual: float
    turning: np.ndarray = field(repr=False, default=None)


def reference_connection(p, h, half_extent=30.0, channel_hint=+1, cfg=None):
    """Equivariant connection a_- -> a_+ on [-l, l] with spacing h.

    Solved on the half line [0, l] with u(0) in the fixed plane of R and u(l) = a_+,
    then unfolded; the symmetry pins the translation frame exactly at t = 0.
    """
    cfg = cfg or MinimizeConfig()
    R = p.brake_reflection()
    grid = Grid1D.from_spacing(0.0, half_extent, h)
    fm = FreeMap(grid.n, p.m, {grid.n - 1: p.a_plus}, plane=[0], basis=_eigenbasis(R, +1.0))
    m = p.m

    def fun_grad(z):
        u = fm.full(z).reshape(-1, m)
        return discrete.chain_energy(p, u, h), fm.grad(discrete.chain_gradient(p, u, h).ravel())

    def hess(z):
        return fm.hess(discrete.chain_hessian(p, fm.full(z).reshape(-1, m), h))

    u0 = initial_brake_guess(p, grid, channel_hint)
    u0[-1] = p.a_plus
    res = newton_minimize(fun_grad, hess, fm.reduce(u0.ravel()), cfg, mass=h)
    half = fm.full(res.z).reshape(-1, m)
    vals = np.concatenate([(half[1:] @ R.T)[::-1], half])
    full = Grid1D(-grid.hi, grid.hi, 2 * grid.n - 1)
    return Path1D(full, vals)


def window_distance(orbit, ref, l):
    """sup over |t| <= l of the distance between the unfolded orbit and the reference."""
    t, vals = unfold(orbit.quarter, orbit.reflection)
    mask = np.abs(t) <= l + 1e-12
    yr = ref.grid.nodes
    hr = ref.grid.h
    idx = np.rint((t[mask] - yr[0]) / hr).astype(int)
    if not np.allclose(yr[idx], t[mask], atol=1e-9):
        raise ConfigurationError("orbit and reference must share the grid spacing")
    return float(np.abs(vals[mask] - ref.values[idx]).max())


def tanh_distance(orbit, l):
    t, vals = unfold(orbit.quarter, orbit.reflection)
    mask = np.abs(t) <= l + 1e-12
    return float(np.abs(vals[mask, 0] - np.tanh(t[mask] / np.sqrt(2.0))).max())


def sweep_T(p, T_list, h=0.01, cfg=None, q=0.1, window=None, channel_hint=+1):
    T_list = [float(T) for T in T_list]
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ConfigurationError("T_list must be increasing")
    valid = [T for T in T_list if T >= T_MIN]
    skipped = [T for T in T_list if T < T_MIN]
    l = window if window is not None else min(valid) / 4.0
    ref = reference_connection(p, h, channel_hint=channel_hint, cfg=cfg)
    rows = []
    for T in valid:
        orb = minimize_brake(p, T, h=h, cfg=cfg, channel_hint=channel_hint)
        tq = confinement_check(orb, q, p.a_plus)
        rows.append(SweepRow(T=T, action=orb.action, W_turn=float(p.W(orb.turning_point)),
                             tau_q=float("nan") if tq is None else tq,
                             window_dist=window_distance(orb, ref, l),
                             tanh_dist=tanh_distance(orb, l) if p.kind is Kind.SCALAR_QUARTIC else float("nan"),
                             energy_residual=energy_residual(p, orb), turning=orb.turning_point))
    return rows, skipped
