"""Double-well potentials with a reflection symmetry, and the constants derived from them.

Two closed-form families are built in:

* ``ScalarQuartic``: ``W(u) = (1 - u^2)^2 / 4`` on the line, minima at -1 and +1,
  reflection ``u -> -u`` exchanging them.
* ``TwoChannel``: a planar potential

      W(u1, u2) = (u2^2 - 1)^2 + kappa (u1^2 - delta (1 - u2^2))^2 + lam u1^2 u2^2

  with minima ``a_-/+ = (0, -/+1)`` and reflection ``(u1, u2) -> (-u1, u2)`` which
  fixes both minima.  The two minimizing connections run through the channels
  ``u1 ~ +/- sqrt(delta (1 - u2^2))`` and are exchanged by the reflection.

``Custom`` potentials take user callables.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, Degenerate, RMaxTooSmall

GAMMA_MARGIN = 0.05
SIGMA_RADII = 64


class Kind(str, enum.Enum):
    SCALAR_QUARTIC = "ScalarQuartic"
    TWO_CHANNEL = "TwoChannel"
    CUSTOM = "Custom"


@dataclass
class Potential:
    kind: Kind
    m: int
    params: dict
    a_minus: np.ndarray
    a_plus: np.ndarray
    gamma: np.ndarray
    W_fn: Optional[Callable] = field(default=None, repr=False)
    grad_fn: Optional[Callable] = field(default=None, repr=False)
    hess_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.a_minus = np.asarray(self.a_minus, dtype=float).reshape(self.m)
        self.a_plus = np.asarray(self.a_plus, dtype=float).reshape(self.m)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(self.m, self.m)
        if not np.array_equal(self.gamma @ self.gamma, np.eye(self.m)):
            raise ConfigurationError("gamma must be an involution")

    # evaluation works on arrays of shape (..., m)
    def W(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind is Kind.SCALAR_QUARTIC:
            s = u[..., 0]
            return 0.25 * (1.0 - s * s) ** 2
        if self.kind is Kind.TWO_CHANNEL:
            k, d, lam = self.params["kappa"], self.params["delta"], self.params["lam"]
            u1, u2 = u[..., 0], u[..., 1]
            f = u1 * u1 - d * (1.0 - u2 * u2)
            return (u2 * u2 - 1.0) ** 2 + k * f * f + lam * u1 * u1 * u2 * u2
        return np.asarray(self.W_fn(u), dtype=float)

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind is Kind.SCALAR_QUARTIC:
            s = u[..., 0]
            return (s ** 3 - s)[..., None]
        if self.kind is Kind.TWO_CHANNEL:
            k, d, lam = self.params["kappa"], self.params["delta"], self.params["lam"]
            u1, u2 = u[..., 0], u[..., 1]
            f = u1 * u1 - d * (1.0 - u2 * u2)
            g1 = 4.0 * k * f * u1 + 2.0 * lam * u1 * u2 * u2
            g2 = 4.0 * u2 * (u2 * u2 - 1.0) + 4.0 * k * d * f * u2 + 2.0 * lam * u1 * u1 * u2
            return np.stack([g1, g2], axis=-1)
        if self.grad_fn is None:
            raise ConfigurationError("Custom potential has no gradient oracle")
        return np.asarray(self.grad_fn(u), dtype=float)

    def hess(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind is Kind.SCALAR_QUARTIC:
            s = u[..., 0]
            return (3.0 * s * s - 1.0)[..., None, None]
        if self.kind is Kind.TWO_CHANNEL:
            k, d, lam = self.params["kappa"], self.params["delta"], self.params["lam"]
            u1, u2 = u[..., 0], u[..., 1]
            f = u1 * u1 - d * (1.0 - u2 * u2)
            h11 = 4.0 * k * (2.0 * u1 * u1 + f) + 2.0 * lam * u2 * u2
            h12 = 8.0 * k * d * u1 * u2 + 4.0 * lam * u1 * u2
            h22 = 12.0 * u2 * u2 - 4.0 + 4.0 * k * d * (2.0 * d * u2 * u2 + f) + 2.0 * lam * u1 * u1
            row1 = np.stack([h11, h12], axis=-1)
            row2 = np.stack([h12, h22], axis=-1)
            return np.stack([row1, row2], axis=-2)
        if self.hess_fn is None:
            raise ConfigurationError("Custom potential has no Hessian oracle")
        return np.asarray(self.hess_fn(u), dtype=float)

    @property
    def minima(self):
        return (self.a_minus, self.a_plus)

    def plus_basis(self):
        """Orthonormal basis (m, k) of the fixed plane of gamma."""
        return _eigenbasis(self.gamma, +1.0)

    def brake_reflection(self):
        """Reflection exchanging a_- and a_+, used for equivariant brake orbits.

        For ScalarQuartic this is gamma itself.  TwoChannel's gamma fixes both
        minima, so the u2 flip (also a symmetry of W) is returned instead.
        """
        if np.array_equal(self.gamma @ self.a_minus, self.a_plus):
            return self.gamma
        if self.kind is Kind.TWO_CHANNEL:
            return np.diag([1.0, -1.0])
        raise ConfigurationError("no reflection exchanging a_- and a_+ is known")

    def to_json(self):
        if self.kind is Kind.CUSTOM:
            raise ConfigurationError("Custom potentials are not serializable")
        return {"kind": self.kind.value, "params": dict(self.params), "m": self.m}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = obj.get("kind")
        params = dict(obj.get("params") or {})
        if kind == Kind.SCALAR_QUARTIC.value:
            p = scalar_quartic()
        elif kind == Kind.TWO_CHANNEL.value:
            p = two_channel(**params)
        else:
            raise ConfigurationError(f"cannot deserialize potential kind {kind!r}")
        if "m" in obj and int(obj["m"]) != p.m:
            raise ConfigurationError("dimension does not match kind")
        return p


def scalar_quartic():
    return Potential(Kind.SCALAR_QUARTIC, 1, {}, [-1.0], [1.0], [[-1.0]])


def two_channel(kappa=2.0, delta=0.5, lam=0.6):
    params = {"kappa": float(kappa), "delta": float(delta), "lam": float(lam)}
    return Potential(Kind.TWO_CHANNEL, 2, params, [0.0, -1.0], [0.0, 1.0],
                     [[-1.0, 0.0], [0.0, 1.0]])


def custom(m, a_minus, a_plus, gamma, W, grad=None, hess=None, params=None):
    return Potential(Kind.CUSTOM, m, dict(params or {}), a_minus, a_plus, gamma,
                     W_fn=W, grad_fn=grad, hess_fn=hess)


def eval_W(p, u):
    return p.W(u)


def grad_W(p, u):
    return p.grad(u)


def hess_W(p, u):
    return p.hess(u)


def _eigenbasis(g, sign):
    if np.array_equal(g, np.diag(np.diag(g))):
        return np.eye(g.shape[0])[:, np.diag(g) == sign]
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    return v[:, np.abs(w - sign) < 1e-8]


def sphere_points(m, n=512, seed=0):
    """Unit vectors in R^m: {-1, 1} for m=1, equispaced circle, Fibonacci sphere, else Gaussian."""
    if m == 1:
        return np.array([[-1.0], [1.0]])
    if m == 2:
        th = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if m == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5.0 ** 0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass(frozen=True)
class NondegeneracyConstants:
    r0: float
    gamma_lo: float
    Gamma_hi: float
    hess_sqrt: tuple = field(default=(), repr=False)  # sqrt of W_uu at (a_-, a_+)


def nondegeneracy_constants(p, margin=GAMMA_MARGIN, n_samples=1000):
    """Two-sided quadratic bounds for W near its minima, and the radius where they hold."""
    hs = [p.hess(a) for a in p.minima]
    eigs = [np.linalg.eigvalsh(h) for h in hs]
    lo = min(e.min() for e in eigs)
    hi = max(e.max() for e in eigs)
    if lo <= 0.0:
        raise Degenerate(f"Hessian at a minimum is not positive definite (min eig {lo:.3g})")
    g_lo = np.sqrt(lo) * (1.0 - margin)
    G_hi = np.sqrt(hi) * (1.0 + margin)

    dirs = sphere_points(p.m, n_samples)
    r = 0.5 * float(np.linalg.norm(p.a_plus - p.a_minus))
    for _ in range(200):
        if _bounds_hold(p, dirs, r, g_lo, G_hi):
            break
        r *= 0.9
    else:
        raise Degenerate("no radius found where the quadratic bounds hold")
    r0 = 0.9 * r
    roots = []
    for h in hs:
        w, v = np.linalg.eigh(h)
        roots.append((v * np.sqrt(w)) @ v.T)
    return NondegeneracyConstants(r0=float(r0), gamma_lo=float(g_lo), Gamma_hi=float(G_hi),
                                  hess_sqrt=tuple(roots))


def _bounds_hold(p, dirs, r, g_lo, G_hi):
    for a in p.minima:
        for frac in (1.0, 0.75, 0.5, 0.25, 0.125):
            z = frac * r * dirs
            w = p.W(a + z)
            z2 = frac * frac * r * r
            if np.any(w < 0.5 * g_lo ** 2 * z2) or np.any(w > 0.5 * G_hi ** 2 * z2):
                return False
            if np.any(np.linalg.eigvalsh(p.hess(a + z)).min(axis=-1) < g_lo ** 2):
                return False
    return True


@dataclass(frozen=True)
class TabulatedSigma:
    """Piecewise linear lower bound r -> min_{|z|=r} sqrt(W(z))."""

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, r):
        return np.interp(r, self.radii, self.values)

    def integral(self, lo, hi):
        """Exact integral of the interpolant over [lo, hi]."""
        pts = np.concatenate([[lo], self.radii[(self.radii > lo) & (self.radii < hi)], [hi]])
        return float(np.trapezoid(self(pts), pts))


def sigma_and_M(p, C0, r_max, n_radii=SIGMA_RADII, n_dirs=512):
    """Tabulate sigma and solve C0 = sqrt(2) * int_{2 max|a|}^M sigma by bisection."""
    r_lo = 2.0 * max(np.linalg.norm(p.a_plus), np.linalg.norm(p.a_minus))
    if r_max <= r_lo:
        raise RMaxTooSmall(f"r_max={r_max} must exceed 2 max|a|={r_lo}")
    dirs = sphere_points(p.m, n_dirs)
    radii = np.linspace(0.0, r_max, n_radii)
    vals = np.array([np.sqrt(np.maximum(p.W(r * dirs), 0.0)).min() for r in radii])
    sigma = TabulatedSigma(radii, vals)
    if C0 <= 0.0:
        return sigma, r_lo

    def F(M):
        return np.sqrt(2.0) * sigma.integral(r_lo, M)

    if F(r_max) < C0:
        raise RMaxTooSmall(f"sqrt(2) int sigma saturates at {F(r_max):.4g} < C0={C0:.4g}")
    lo, hi = r_lo, r_max
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if F(mid) < C0:
            lo = mid
        else:
            hi = mid
    return sigma, 0.5 * (lo + hi)


@dataclass
class H1Report:
    passed: bool
    M_probe: float
    worst_margin: float
    worst_point: np.ndarray
    liminf_proxy: float


def check_h1(p, M_probe, n_dirs=256, s_max=4.0, n_s=31):
    """Sample W(s u) >= W(u) for |u| = M_probe, s in [1, s_max]."""
    dirs = sphere_points(p.m, n_dirs)
    u = M_probe * dirs
    base = p.W(u)
    s = np.linspace(1.0, s_max, n_s)
    vals = p.W(s[:, None, None] * u[None])
    margin = vals - base[None]
    idx = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[idx])
    tol = 1e-12 * (1.0 + np.abs(base).max())
    far = np.concatenate([p.W(r * dirs) for r in np.linspace(4 * M_probe, 8 * M_probe, 5)])
    return H1Report(passed=bool(worst >= -tol), M_probe=float(M_probe), worst_margin=worst,
                    worst_point=s[idx[0]] * u[idx[1]], liminf_proxy=float(far.min()))
