"""L-periodic solutions of  Delta u = W_u(u)  on the strip by energy minimization.

Admissible maps satisfy ``u(x + L, y) = u(x, y)``, ``u(L/4 + x, y) = u(L/4 - x, y)``,
``u(-x, y) = gamma u(x, y)`` and ``u -> a_-/+`` as ``y -> -/+ infinity``.  They are
determined by the reduced domain [0, L/4] x [-Y, Y], with

* x = 0:      the -1 component of gamma vanishes, the +1 component is free;
* x = L/4:    natural (free) boundary;
* y = -/+ Y:  Dirichlet u = a_-/+.

The discrete energy is the tensor-product trapezoid rule with forward differences
on the grid edges; the full-period energy is four times the reduced energy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import discrete
from .errors import ConfigurationError, NonConvergence, TrapViolation
from .fiber import QBAR_CAP, decompose
from .grids import Field2D, FreeMap, Grid2D, Path1D
from .optim import MinimizeConfig, newton_minimize
from .potential import check_h1, nondegeneracy_constants

log = logging.getLogger(__name__)

L_MIN = 4.0


def _weights(grid):
    return discrete.trapezoid_weights(grid.nx), discrete.trapezoid_weights(grid.ny)


def reduced_energy(p, u, grid):
    """Energy of the reduced domain for values of shape (nx, ny, m)."""
    wx, wy = _weights(grid)
    hx, hy = grid.hx, grid.hy
    dx = np.diff(u, axis=0)
    dy = np.diff(u, axis=1)
    kx = 0.5 * np.einsum("j,ijc->", wy, dx * dx) * hy / hx
    ky = 0.5 * np.einsum("i,ijc->", wx, dy * dy) * hx / hy
    pot = hx * hy * float(wx @ p.W(u) @ wy)
    return float(kx + ky + pot)


def reduced_gradient(p, u, grid):
    wx, wy = _weights(grid)
    hx, hy = grid.hx, grid.hy
    g = hx * hy * (wx[:, None, None] * wy[None, :, None]) * p.grad(u)
    fx = np.diff(u, axis=0) * (wy[None, :, None] * hy / hx)
    g[:-1] -= fx
    g[1:] += fx
    fy = np.diff(u, axis=1) * (wx[:, None, None] * hx / hy)
    g[:, :-1] -= fy
    g[:, 1:] += fy
    return g


def _kinetic_matrix(grid, m):
    wx, wy = _weights(grid)
    Dx = discrete.difference_matrix(grid.nx)
    Dy = discrete.difference_matrix(grid.ny)
    Kx = sp.kron(Dx.T @ Dx, sp.diags(wy)) * (grid.hy / grid.hx)
    Ky = sp.kron(sp.diags(wx), Dy.T @ Dy) * (grid.hx / grid.hy)
    return sp.kron(Kx + Ky, sp.identity(m), format="csr")


def reduced_hessian(p, u, grid, K=None):
    wx, wy = _weights(grid)
    K = _kinetic_matrix(grid, p.m) if K is None else K
    w = (grid.hx * grid.hy) * np.outer(wx, wy).ravel()
    blocks = w[:, None, None] * p.hess(u.reshape(-1, p.m))
    return (K + discrete.block_diag(blocks)).tocsr()


def tail_correction_strip(p, f):
    """Analytic quadratic tails beyond y = -/+ Y, integrated over the full period."""
    consts = nondegeneracy_constants(p)
    wx, _ = _weights(f.grid)
    total = 0.0
    for i in range(f.grid.nx):
        for end, a, root in ((f.values[i, 0], p.a_minus, consts.hess_sqrt[0]),
                             (f.values[i, -1], p.a_plus, consts.hess_sqrt[1])):
            d = end - a
            total += wx[i] * f.grid.hx * 0.5 * float(d @ root @ d)
    return 4.0 * total


def action_strip(p, f):
    """Full-period energy: four times the reduced quadrature plus the y-tail estimate."""
    return 4.0 * reduced_energy(p, f.values, f.grid) + tail_correction_strip(p, f)


def unfold_strip(f, gamma):
    """Values on [-L/4, 3L/4] x [-Y, Y] (one period in x)."""
    u = f.values
    left = np.einsum("ab,ijb->ija", gamma, u[1:])[::-1]
    mirror = u[-2::-1]
    last = np.einsum("ab,ijb->ija", gamma, u[1:])
    vals = np.concatenate([left, u, mirror, last], axis=0)
    x = f.grid.hx * (np.arange(vals.shape[0]) - (f.grid.nx - 1))
    return x, vals


def action_unfolded(p, x, vals, grid):
    """Trapezoid energy of an unfolded period; equals action_strip without tails."""
    full = Grid2D(4.0 * grid.hx * (vals.shape[0] - 1), grid.Y, vals.shape[0], grid.ny)
    return reduced_energy(p, vals, full)


def strip_M(p, start=None, step=0.25, max_r=64.0):
    """Smallest sampled radius at which the monotonicity hypothesis h1 holds."""
    r = start if start is not None else 2.0 * max(np.linalg.norm(p.a_plus), np.linalg.norm(p.a_minus))
    while r <= max_r:
        if check_h1(p, r).passed:
            return float(r)
        r += step
    raise ConfigurationError("h1 monotonicity not found below max_r")


def radial_clamp(p, f, M):
    """Pointwise projection onto the ball |u| <= M; reports whether the action decreased."""
    r = np.linalg.norm(f.values, axis=-1)
    scale = np.minimum(1.0, M / np.maximum(r, 1e-300))
    g = Field2D(f.grid, f.values * scale[..., None])
    before, after = action_strip(p, f), action_strip(p, g)
    return g, ClampReport(before=before, after=after, h1_violation=bool(after > before + 1e-12 * abs(before)),
                          clamped=int(np.count_nonzero(scale < 1.0)))


@dataclass
class ClampReport:
    before: float
    after: float
    h1_violation: bool
    clamped: int


def strip_map(p, grid):
    if not (np.array_equal(p.gamma @ p.a_plus, p.a_plus) and np.array_equal(p.gamma @ p.a_minus, p.a_minus)):
        raise ConfigurationError("the strip problem needs gamma to fix a_- and a_+")
    nx, ny = grid.nx, grid.ny
    fixed = {}
    for i in range(nx):
        fixed[i * ny] = p.a_minus
        fixed[i * ny + ny - 1] = p.a_plus
    plane = [j for j in range(1, ny - 1)]  # nodes of the x = 0 column
    return FreeMap(nx * ny, p.m, fixed, plane=plane, basis=p.plus_basis())


def tilde_u_strip(conns, grid, width=1.0):
    """The comparison map on the reduced domain: linear ramp on [0, width], then u_+."""
    um, up = conns[0].values, conns[1].values
    s = np.clip(grid.x / width, 0.0, 1.0)
    mid = 0.5 * (um + up)
    return mid[None] + s[:, None, None] * (0.5 * (up - um))[None]


def C0_strip(p, conns, n_x=2001):
    """J(u~) - c0 L: two ramps over x in [-1, 1], computed with the y-chain of the connections."""
    um, up = conns[0].values, conns[1].values
    h = conns[1].grid.h
    c0 = conns[1].action
    x = np.linspace(-1.0, 1.0, n_x)
    half = 0.5 * (up - um)
    kin = 0.5 * discrete.l2_inner(half, half, h)
    dens = np.array([discrete.chain_energy(p, 0.5 * (up + um) + xi * half, h) - c0 for xi in x])
    return 2.0 * float(np.trapezoid(kin + dens, x))


@dataclass
class StripSolution:
    field: Field2D
    action: float
    c0: float
    C0: float
    M: float
    iters: int
    grad_norm: float
    initial_action: float
    trap_d: float
    history: list = field(default_factory=list, repr=False)

    @property
    def grid(self):
        return self.field.grid


def trap_distance(p, f, r0):
    """Smallest d with |u - a_+| < r0/2 for y > d and |u - a_-| < r0/2 for y < -d."""
    y = f.grid.y
    up = np.linalg.norm(f.values - p.a_plus, axis=-1).max(axis=0)
    um = np.linalg.norm(f.values - p.a_minus, axis=-1).max(axis=0)
    bad = np.nonzero(((y > 0) & (up >= 0.5 * r0)) | ((y < 0) & (um >= 0.5 * r0)))[0]
    if bad.size == 0:
        return 0.0
    return float(np.abs(y[bad]).max())


def minimize_strip(p, conns, L, Y=None, grid=None, cfg=None, hx=0.1, hy=0.1, u0=None, guess="ramp"):
    cfg = cfg or MinimizeConfig()
    if L < L_MIN:
        raise NonConvergence(f"L={L} is below L_min={L_MIN}: the reduced domain cannot hold the ramp")
    Y = conns[1].grid.hi if Y is None else Y
    grid = grid or Grid2D.from_spacing(L, Y, hx, hy)
    if grid.ny != conns[1].grid.n or abs(grid.Y - conns[1].grid.hi) > 1e-12:
        raise ConfigurationError("connections must live on the strip's y-grid")
    fm = strip_map(p, grid)
    m = p.m
    shape = (grid.nx, grid.ny, m)
    K = _kinetic_matrix(grid, m)
    M = strip_M(p)
    C0 = C0_strip(p, conns)
    c0 = conns[1].action
    if u0 is None:
        width = {"ramp": 1.0, "wide": max(1.0, L / 8.0)}.get(guess, 1.0)
        u0 = tilde_u_strip(conns, grid, width)

    def fun_grad(z):
        u = fm.full(z).reshape(shape)
        return 4.0 * reduced_energy(p, u, grid), 4.0 * fm.grad(reduced_gradient(p, u, grid).ravel())

    def hess(z):
        return 4.0 * fm.hess(reduced_hessian(p, fm.full(z).reshape(shape), grid, K))

    def project(z):
        u = fm.full(z).reshape(shape)
        r = np.linalg.norm(u, axis=-1)
        if r.max() <= M:
            return z
        u = u * np.minimum(1.0, M / np.maximum(r, 1e-300))[..., None]
        return fm.reduce(u.ravel())

    z0 = fm.reduce(np.asarray(u0, dtype=float).ravel())
    f0 = fun_grad(z0)[0]
    res = newton_minimize(fun_grad, hess, z0, cfg, project=project, mass=4.0 * grid.hx * grid.hy)
    f = Field2D(grid, fm.full(res.z).reshape(shape))
    consts = nondegeneracy_constants(p)
    d = trap_distance(p, f, consts.r0)
    if d >= grid.Y - grid.hy:
        raise TrapViolation(f"no band |u - a| < r0/2 near y = -/+Y (measured d = {d:.3g})", d)
    return StripSolution(field=f, action=res.f + tail_correction_strip(p, f), c0=c0, C0=C0, M=M,
                         iters=res.iters, grad_norm=res.grad_norm, initial_action=f0, trap_d=d,
                         history=res.history)


def strip_gradient_check(p, conns, grid, n_dirs=20, seed=0, noise=0.05):
    """Worst relative error of the reduced-energy gradient in random free directions."""
    fm = strip_map(p, grid)
    shape = (grid.nx, grid.ny, p.m)
    rng = np.random.default_rng(seed)
    z = fm.reduce(tilde_u_strip(conns, grid).ravel())
    z = z + noise * rng.standard_normal(z.shape)

    def fun(z):
        return reduced_energy(p, fm.full(z).reshape(shape), grid)

    def grad(z):
        return fm.grad(reduced_gradient(p, fm.full(z).reshape(shape), grid).ravel())

    return discrete.gradient_check(fun, grad, z, n_dirs, seed)


def pde_residual(p, f):
    """max over interior nodes of |Delta_h u - W_u(u)| (five-point Laplacian)."""
    u = f.values
    hx, hy = f.grid.hx, f.grid.hy
    lap = ((u[2:, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / hx ** 2
           + (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy ** 2)
    return float(np.abs(lap - p.grad(u[1:-1, 1:-1])).max())


@dataclass
class HamiltonianReport:
    omega: float
    omega_tilde_max: float  # max_x |<u_x, u_y>|
    A_variation: float  # max_x |A(x)|
    x: np.ndarray = field(repr=False, default=None)  # half-node abscissae
    A: np.ndarray = field(repr=False, default=None)
    B: np.ndarray = field(repr=False, default=None)
    ux_bound_gap: np.ndarray = field(repr=False, default=None)  # J - c0 + |omega| - |u_x|^2/2


def fiber_actions(p, f):
    h = f.grid.hy
    return np.array([discrete.chain_energy(p, f.values[i], h) for i in range(f.grid.nx)])


def hamiltonian_identities(p, f, conns):
    """A(x) = |u_x|^2/2 - (J(u(x,.)) - c0 - omega) and B(x) = <u_x, u_y> at half nodes."""
    c0 = conns[1].action
    J = fiber_actions(p, f)
    omega = float(J[-1] - c0)
    u = f.values
    hx, hy = f.grid.hx, f.grid.hy
    ux = np.diff(u, axis=0) / hx
    mid = 0.5 * (u[1:] + u[:-1])
    uy = discrete.centered_derivative(mid.transpose(1, 0, 2), hy).transpose(1, 0, 2)
    kin = np.array([0.5 * discrete.l2_inner(ux[i], ux[i], hy) for i in range(len(ux))])
    Jmid = 0.5 * (J[1:] + J[:-1])
    A = kin - (Jmid - c0 - omega)
    B = np.array([discrete.l2_inner(ux[i], uy[i], hy) for i in range(len(ux))])
    xh = 0.5 * (f.grid.x[1:] + f.grid.x[:-1])
    gap = (Jmid - c0 + abs(omega)) - kin
    return HamiltonianReport(omega=omega, omega_tilde_max=float(np.abs(B).max()),
                             A_variation=float(np.abs(A).max()), x=xh, A=A, B=B, ux_bound_gap=gap)


def fiber_series(f, conns, qbar=QBAR_CAP):
    """Decomposition of every x-fiber, ordered by x."""
    yg = f.grid.ygrid()
    return [decompose(Path1D(yg, f.values[i]), conns, qbar) for i in range(f.grid.nx)]


def x_derivative(f):
    """Second-order u_x at the nodes: one-sided at x = L/4 replaced by the natural condition."""
    u = f.values
    hx = f.grid.hx
    ux = np.empty_like(u)
    ux[1:-1] = (u[2:] - u[:-2]) / (2.0 * hx)
    ux[-1] = 0.0  # brake line: u(L/4 + s) = u(L/4 - s)
    ux[0] = (u[1] - u[0]) / hx  # placeholder; the x = 0 fiber is ambiguous anyway
    return ux


@dataclass
class StayInReport:
    passed: bool
    x_p: float
    bound: float  # C0 / e_p
    violations: np.ndarray
    defined: bool


def stay_in_audit(series, x, p_level, C0=None, e_p=None):
    q1 = np.array([d.q1 for d in series])
    q = np.array([d.q for d in series])
    inside = np.nonzero(q1 <= p_level)[0]
    if inside.size == 0:
        return StayInReport(False, float("nan"), float("nan"), np.array([]), False)
    i_p = int(inside[0])
    viol = np.nonzero(q[i_p:] > p_level)[0] + i_p
    bound = C0 / e_p if (C0 is not None and e_p) else float("inf")
    x_p = float(x[i_p])
    return StayInReport(passed=bool(viol.size == 0 and x_p <= bound), x_p=x_p, bound=float(bound),
                        violations=np.asarray(x)[viol], defined=True)
