"""Discrete action of a chain of nodes and the finite-difference gradient audit.

The 1D discretization used throughout is

    E(u) = sum_i |u_{i+1} - u_i|^2 / (2h) + h * sum_i w_i W(u_i)

with trapezoid weights ``w`` (1/2 at the ends).  Its Euler-Lagrange equation is the
standard three-point scheme, and its Hessian divided by ``h`` is the discrete
linearized operator ``-d^2/dy^2 + W_uu(u)``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def trapezoid_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def difference_matrix(n):
    """Forward differences, shape (n-1, n)."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def block_diag(blocks):
    """Sparse block-diagonal matrix from an (n, m, m) array."""
    n, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(n * m, n * m)).tocsr()


def chain_energy(p, u, h, weights=None):
    u = np.asarray(u, dtype=float)
    w = trapezoid_weights(len(u)) if weights is None else weights
    du = np.diff(u, axis=0)
    return 0.5 * float(np.sum(du * du)) / h + h * float(np.dot(w, p.W(u)))


def chain_gradient(p, u, h, weights=None):
    u = np.asarray(u, dtype=float)
    w = trapezoid_weights(len(u)) if weights is None else weights
    du = np.diff(u, axis=0) / h
    g = h * w[:, None] * p.grad(u)
    g[:-1] -= du
    g[1:] += du
    return g


def chain_hessian(p, u, h, weights=None):
    u = np.asarray(u, dtype=float)
    n, m = u.shape
    w = trapezoid_weights(n) if weights is None else weights
    D = difference_matrix(n)
    K = sp.kron((D.T @ D) / h, sp.identity(m), format="csr")
    return (K + block_diag(h * w[:, None, None] * p.hess(u))).tocsr()


def l2_inner(a, b, h, weights=None):
    """Trapezoid L2 inner product of two sampled paths of shape (n, m)."""
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    w = trapezoid_weights(len(a)) if weights is None else weights
    return h * float(np.dot(w, np.sum(a * b, axis=1)))


def l2_norm(a, h, weights=None):
    return np.sqrt(max(l2_inner(a, a, h, weights), 0.0))


def dnorm2(a, h):
    """Squared L2 norm of the forward-difference derivative."""
    d = np.diff(np.asarray(a, dtype=float).reshape(len(a), -1), axis=0)
    return float(np.sum(d * d)) / h


def h1_norm(a, h):
    return np.sqrt(l2_inner(a, a, h) + dnorm2(a, h))


def centered_derivative(u, h):
    """Second-order derivative, one-sided (second order) at the ends."""
    return np.gradient(np.asarray(u, dtype=float), h, axis=0, edge_order=2)


def gradient_check(fun, grad, z, n_dirs=20, seed=0, eps=1e-3):
    """Worst relative error between directional derivatives and finite differences.

    Uses the fourth-order central stencil, so a comparatively large step keeps the
    roundoff (|f| * 1e-16 / eps) below the truncation error on large grids.
    """
    rng = np.random.default_rng(seed)
    g = grad(z)
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(z.shape)
        d /= np.abs(d).max()
        an = float(np.sum(g * d))
        f1 = fun(z + eps * d) - fun(z - eps * d)
        f2 = fun(z + 2.0 * eps * d) - fun(z - 2.0 * eps * d)
        fd = (8.0 * f1 - f2) / (12.0 * eps)
        scale = max(abs(an), abs(fd), 1e-300)
        worst = max(worst, abs(an - fd) / scale)
    return worst
