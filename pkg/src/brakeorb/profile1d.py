"""One-dimensional heteroclinic connections and their linearization.

A connection is a minimizer of the action ``J_R(u) = int (|u'|^2/2 + W(u)) dy`` with
``u -> a_-/+`` as ``y -> -/+ infinity``.  On a finite grid the endpoints are pinned to
the minima and the neglected tails are accounted for by a quadratic tail estimate.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from . import discrete
from .errors import ConfigurationError, TailTooShort
from .grids import FreeMap, Grid1D, Path1D
from .optim import MinimizeConfig, newton_minimize
from .potential import GAMMA_MARGIN, Kind, nondegeneracy_constants

log = logging.getLogger(__name__)


class Sign(str, enum.Enum):
    MINUS = "minus"
    PLUS = "plus"


@dataclass
class Connection:
    path: Path1D
    sign: Sign
    action: float
    tail: dict = field(default_factory=dict)  # side "-"/"+" -> (k, K)
    collapsed: bool = False  # minimizer fixed by gamma in a non-scalar potential
    endpoint_ok: bool = True
    equipartition: float = float("nan")
    iters: int = 0
    initial_action: float = float("nan")

    @property
    def grid(self):
        return self.path.grid

    @property
    def values(self):
        return self.path.values

    def derivative(self):
        return discrete.centered_derivative(self.values, self.grid.h)

    def sidecar(self):
        k = {s: self.tail.get(s, (float("nan"), float("nan"))) for s in ("-", "+")}
        return {"sign": self.sign.value, "action": self.action,
                "tail_k": [k["-"][0], k["+"][0]], "tail_K": [k["-"][1], k["+"][1]],
                "grid": {"lo": self.grid.lo, "hi": self.grid.hi, "n": self.grid.n}}


def tail_correction(p, values, consts=None):
    """Action of the linearized tails beyond both grid ends: d . sqrt(W_uu(a)) d / 2."""
    consts = consts or nondegeneracy_constants(p)
    total = 0.0
    for end, a, root in ((values[0], p.a_minus, consts.hess_sqrt[0]),
                         (values[-1], p.a_plus, consts.hess_sqrt[1])):
        d = end - a
        total += 0.5 * float(d @ root @ d)
    return total


def action_JR(p, path, consts=None):
    """Discrete J_R of a sampled path plus the analytic tail estimate."""
    return discrete.chain_energy(p, path.values, path.grid.h) + tail_correction(p, path.values, consts)


def endpoints_ok(p, path, r0):
    v = path.values
    return bool(np.linalg.norm(v[0] - p.a_minus) <= r0 and np.linalg.norm(v[-1] - p.a_plus) <= r0)


def minus_basis(p):
    g = p.gamma
    if np.array_equal(g, np.diag(np.diag(g))):
        return np.eye(p.m)[:, np.diag(g) == -1.0]
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    return v[:, np.abs(w + 1.0) < 1e-8]


def initial_guess(p, grid, channel_hint=+1, amplitude=0.5):
    """Linear interpolation a_- -> a_+ plus a transverse bump along the -1 eigenspace of gamma."""
    y = grid.nodes
    s = (y - grid.lo) / (grid.hi - grid.lo)
    u = (1.0 - s)[:, None] * p.a_minus + s[:, None] * p.a_plus
    if p.kind is not Kind.SCALAR_QUARTIC:
        B = minus_basis(p)
        if B.shape[1]:
            bump = np.sin(np.pi * s) ** 2
            u = u + channel_hint * amplitude * bump[:, None] * B[:, 0]
    return u


def pinned_map(p, n):
    return FreeMap(n, p.m, {0: p.a_minus, n - 1: p.a_plus})


def minimize_pinned(p, grid, u0, cfg):
    """Minimize the chain energy with endpoints pinned to a_-/+."""
    fm = pinned_map(p, grid.n)
    h, m = grid.h, p.m

    def fun_grad(z):
        u = fm.full(z).reshape(-1, m)
        return discrete.chain_energy(p, u, h), fm.grad(discrete.chain_gradient(p, u, h).ravel())

    def hess(z):
        return fm.hess(discrete.chain_hessian(p, fm.full(z).reshape(-1, m), h))

    res = newton_minimize(fun_grad, hess, fm.reduce(np.asarray(u0, dtype=float).ravel()), cfg,
                          mass=h)
    return fm.full(res.z).reshape(-1, m), res


def chain_gradient_check(p, grid, n_dirs=20, seed=0, noise=0.05):
    """Worst relative error of the pinned J_R gradient in random free directions."""
    fm = pinned_map(p, grid.n)
    h, m = grid.h, p.m
    rng = np.random.default_rng(seed)
    z = fm.reduce(initial_guess(p, grid).ravel())
    z = z + noise * rng.standard_normal(z.shape)

    def fun(z):
        return discrete.chain_energy(p, fm.full(z).reshape(-1, m), h)

    def grad(z):
        return fm.grad(discrete.chain_gradient(p, fm.full(z).reshape(-1, m), h).ravel())

    return discrete.gradient_check(fun, grad, z, n_dirs, seed)


def solve_connection(p, grid, channel_hint=+1, cfg=None):
    """Minimize the discrete J_R with pinned endpoints from a hinted channel."""
    cfg = cfg or MinimizeConfig()
    consts = nondegeneracy_constants(p)
    half = min(-grid.lo, grid.hi)
    if half < 10.0 / consts.gamma_lo:
        log.warning("grid half-extent %.3g is below 10/gamma_lo = %.3g", half, 10.0 / consts.gamma_lo)
    u0 = initial_guess(p, grid, channel_hint)
    u, res = minimize_pinned(p, grid, u0, cfg)
    path = Path1D(grid, u)
    action = action_JR(p, path, consts)
    if p.kind is Kind.SCALAR_QUARTIC:
        sign, collapsed = (Sign.PLUS if channel_hint >= 0 else Sign.MINUS), False
    else:
        B = minus_basis(p)
        transverse = u @ B
        k = int(np.argmax(np.abs(transverse).max(axis=1)))
        collapsed = bool(np.abs(transverse).max() <= 1e-8)
        c = transverse[k, 0] if transverse.shape[1] else 0.0
        sign = Sign.PLUS if (c > 0 or (collapsed and channel_hint >= 0)) else Sign.MINUS
        if collapsed:
            log.warning("connection collapsed onto the fixed plane of gamma")
    conn = Connection(path=path, sign=sign, action=action, collapsed=collapsed,
                      endpoint_ok=endpoints_ok(p, path, consts.r0), iters=res.iters,
                      initial_action=action_JR(p, Path1D(grid, u0), consts))
    conn.equipartition = equipartition_residual(p, conn)
    for side in ("-", "+"):
        try:
            conn.tail[side] = tail_rate(conn, side, p=p)
        except TailTooShort:
            conn.tail[side] = (float("nan"), float("nan"))
    return conn


def solve_pair(p, grid, cfg=None):
    """Connections (u_-, u_+) from opposite channel hints."""
    cm = solve_connection(p, grid, -1, cfg)
    cp = solve_connection(p, grid, +1, cfg)
    if p.kind is Kind.SCALAR_QUARTIC:
        cm.sign = Sign.MINUS
    return cm, cp


def equipartition_residual(p, conn):
    """max over interior nodes of |u'|^2/2 - W(u)| with centered differences."""
    u = conn.values if hasattr(conn, "values") else np.asarray(conn)
    h = conn.grid.h
    du = (u[2:] - u[:-2]) / (2.0 * h)
    r = 0.5 * np.sum(du * du, axis=1) - p.W(u[1:-1])
    return float(np.abs(r).max())


def tail_rate(conn, side, p=None, r0=None, gamma_lo=None, min_nodes=10):
    """Least-squares fit log|u - a| ~ log K - k |y| on the decaying tail window."""
    if p is not None and (r0 is None or gamma_lo is None):
        c = nondegeneracy_constants(p)
        r0, gamma_lo = r0 or c.r0, gamma_lo or c.gamma_lo
    u, y = conn.values, conn.grid.nodes
    if side in ("+", "plus", +1):
        a = p.a_plus if p is not None else u[-1]
        s, dist = y, np.linalg.norm(u - a, axis=1)
        end = conn.grid.hi
    else:
        a = p.a_minus if p is not None else u[0]
        s, dist = -y, np.linalg.norm(u - a, axis=1)
        end = -conn.grid.lo
    r0 = r0 if r0 is not None else 0.5
    # keep clear of the pinned end where the truncation bends the profile
    guard = 3.0 / gamma_lo if gamma_lo else 0.0
    mask = (dist > 1e-12) & (dist < r0) & (s > 0) & (s <= end - guard)
    if mask.sum() < min_nodes:
        raise TailTooShort(f"only {int(mask.sum())} tail nodes on side {side}")
    slope, icpt = np.polyfit(s[mask], np.log(dist[mask]), 1)
    return float(-slope), float(np.exp(icpt))


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    zero_overlap: float
    zero_index: int
    simple_zero: bool
    eigenvectors: np.ndarray = field(repr=False, default=None)


def operator_T(p, conn):
    """Discrete -d^2 + W_uu(u) on interior nodes (Dirichlet far field)."""
    u, h = conn.values, conn.grid.h
    H = discrete.chain_hessian(p, u, h) / h
    m = p.m
    keep = np.arange(m, (len(u) - 1) * m)
    return H[keep][:, keep].tocsc()


def operator_T_spectrum(p, conn, n_eigs=4):
    T = operator_T(p, conn)
    u = conn.values
    lower = float(np.linalg.eigvalsh(p.hess(u)).min()) - 1.0
    n_eigs = min(n_eigs, T.shape[0] - 2)
    w, V = spla.eigsh(T, k=n_eigs, sigma=lower, which="LM")
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    du = conn.derivative()[1:-1].ravel()
    du /= np.linalg.norm(du)
    iz = int(np.argmin(np.abs(w)))
    overlap = float(abs(V[:, iz] @ du) / np.linalg.norm(V[:, iz]))
    others = np.abs(np.delete(w, iz))
    gap = float(others.min()) if others.size else np.inf
    simple = bool(abs(w[iz]) < gap / 10.0)
    return Spectrum(eigenvalues=w, zero_overlap=overlap, zero_index=iz, simple_zero=simple,
                    eigenvectors=V)


def sharp_mu(p, conn):
    """min <T nu, nu> / (|nu|^2 + |nu'|^2) over nu orthogonal to u' (dense, exact on the grid)."""
    u, h = conn.values, conn.grid.h
    m = p.m
    T = operator_T(p, conn).toarray() * h  # quadratic form of the discrete Hessian
    n_int = len(u) - 2
    D = discrete.difference_matrix(len(u)).toarray()[:, 1:-1]
    B = h * np.eye(n_int * m) + np.kron(D.T @ D, np.eye(m)) / h
    du = conn.derivative()[1:-1].ravel()
    # orthonormal basis of the complement of u' via a Householder reflector
    e = du / np.linalg.norm(du)
    v = e.copy()
    v[0] += np.copysign(1.0, e[0])
    v /= np.linalg.norm(v)
    Hh = np.eye(len(e)) - 2.0 * np.outer(v, v)
    Z = Hh[:, 1:]
    w = sla.eigh(Z.T @ T @ Z, Z.T @ B @ Z, eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


@dataclass
class MuEstimate:
    mu_hat: float  # spectral proxy min(lambda_1, gamma_lo^2)(1 - margin)
    mu_sharp: float  # exact discrete constant of <T nu, nu> >= mu (1 + |nu'|^2)
    lambda1: float
    samples: np.ndarray  # d^2/dq^2 W_eff(q nu) / (1 + |nu'|^2) at the sample points
    q_sample: float
    convex: bool

    @property
    def mu(self):
        """Constant usable in the effective-potential lower bound."""
        return self.mu_sharp * (1.0 - GAMMA_MARGIN)


def random_orthogonal_directions(conn, n, seed=0, n_modes=8):
    """Smooth random unit nu (L2) vanishing at the ends and orthogonal to u'."""
    rng = np.random.default_rng(seed)
    y = conn.grid.nodes
    h = conn.grid.h
    s = (y - y[0]) / (y[-1] - y[0])
    du = conn.derivative()
    du[0] = du[-1] = 0.0
    m = conn.path.m
    out = []
    for _ in range(n):
        nu = np.zeros((len(y), m))
        for c in range(m):
            for k in range(1, n_modes + 1):
                nu[:, c] += rng.standard_normal() / k * np.sin(np.pi * k * s)
        nu -= discrete.l2_inner(nu, du, h) / discrete.l2_inner(du, du, h) * du
        nu /= discrete.l2_norm(nu, h)
        out.append(nu)
    return out


def check_orthogonal(conn, nu, tol=1e-8):
    du = conn.derivative()
    h = conn.grid.h
    ip = discrete.l2_inner(nu, du, h)
    if abs(ip) > tol * discrete.l2_norm(du, h) * max(discrete.l2_norm(nu, h), 1e-300):
        raise ConfigurationError("direction is not orthogonal to the connection derivative")


def estimate_mu(p, conn, spectrum=None, qbar=0.1, n_samples=20, seed=0):
    spectrum = spectrum or operator_T_spectrum(p, conn)
    consts = nondegeneracy_constants(p)
    w = np.delete(spectrum.eigenvalues, spectrum.zero_index)
    lam1 = float(w[w > 0].min())
    mu_hat = min(lam1, consts.gamma_lo ** 2) * (1.0 - GAMMA_MARGIN)
    mu_sharp = sharp_mu(p, conn)
    h = conn.grid.h
    q = 0.5 * qbar
    eps = 1e-3
    u = conn.values
    samples = []
    for nu in random_orthogonal_directions(conn, n_samples, seed):
        E = [discrete.chain_energy(p, u + t * nu, h) for t in (q - eps, q, q + eps)]
        d2 = (E[0] - 2.0 * E[1] + E[2]) / eps ** 2
        samples.append(d2 / (1.0 + discrete.dnorm2(nu, h)))
    samples = np.array(samples)
    return MuEstimate(mu_hat=mu_hat, mu_sharp=mu_sharp, lambda1=lam1, samples=samples,
                      q_sample=q, convex=bool(samples.min() > 0))


def best_shift_distance(values, y, ref, extent):
    """min over r in [-extent/4, extent/4] of sup|values - ref(y - r)| by golden section."""
    def dist(r):
        return float(np.abs(values - ref(y - r)).max())

    res = minimize_scalar(dist, bounds=(-extent / 4.0, extent / 4.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.fun), float(res.x)


def tanh_profile(y):
    return np.tanh(y / np.sqrt(2.0))[..., None] if np.ndim(y) else np.tanh(y / np.sqrt(2.0))


def distance_to_tanh(conn):
    y = conn.grid.nodes
    return best_shift_distance(conn.values, y, lambda s: np.tanh(s / np.sqrt(2.0))[:, None],
                               conn.grid.hi - conn.grid.lo)


def reflect_shift(p, conn):
    """gamma applied to a connection (the other channel)."""
    return Path1D(conn.grid, conn.values @ p.gamma.T)
