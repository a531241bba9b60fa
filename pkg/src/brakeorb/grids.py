"""Uniform grids and the discretized paths and fields that live on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int  # number of nodes

    def __post_init__(self):
        if self.n < 16:
            raise ConfigurationError("a 1D grid needs at least 16 nodes")
        if not self.hi > self.lo:
            raise ConfigurationError("grid extent must be positive")

    @classmethod
    def from_spacing(cls, lo, hi, h):
        n = int(round((hi - lo) / h)) + 1
        return cls(float(lo), float(hi), n)

    @property
    def nodes(self):
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def h(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def extent(self):
        return (self.lo, self.hi)

    def weights(self):
        """Trapezoid weights (without the factor h)."""
        w = np.ones(self.n)
        w[0] = w[-1] = 0.5
        return w

    def refined(self):
        return Grid1D(self.lo, self.hi, 2 * self.n - 1)


@dataclass
class Path1D:
    grid: Grid1D
    values: np.ndarray  # (n, m)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n:
            raise ConfigurationError("path length does not match grid")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("path has non-finite entries")
        self.values = v

    @property
    def m(self):
        return self.values.shape[1]

    def copy(self):
        return Path1D(self.grid, self.values.copy())


@dataclass(frozen=True)
class Grid2D:
    """Reduced strip [0, L/4] x [-Y, Y]."""

    L: float
    Y: float
    nx: int
    ny: int

    @classmethod
    def from_spacing(cls, L, Y, hx, hy):
        nx = int(round(L / 4.0 / hx)) + 1
        ny = int(round(2.0 * Y / hy)) + 1
        return cls(float(L), float(Y), nx, ny)

    @property
    def x(self):
        return np.linspace(0.0, self.L / 4.0, self.nx)

    @property
    def y(self):
        return np.linspace(-self.Y, self.Y, self.ny)

    @property
    def hx(self):
        return self.L / 4.0 / (self.nx - 1)

    @property
    def hy(self):
        return 2.0 * self.Y / (self.ny - 1)

    def ygrid(self):
        return Grid1D(-self.Y, self.Y, self.ny)


@dataclass
class Field2D:
    grid: Grid2D
    values: np.ndarray  # (nx, ny, m)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:2] != (self.grid.nx, self.grid.ny):
            raise ConfigurationError("field shape does not match grid")

    @property
    def m(self):
        return self.values.shape[2]

    def fiber(self, i):
        return Path1D(self.grid.ygrid(), self.values[i])

    def copy(self):
        return Field2D(self.grid, self.values.copy())


class FreeMap:
    """Affine map from free unknowns z to a full nodal array u = P z + offset.

    ``fixed`` nodes are pinned to given values; ``plane`` nodes are restricted to
    span(basis) (the fixed plane of a reflection).
    """

    def __init__(self, n_nodes, m, fixed, plane=(), basis=None):
        self.n_nodes, self.m = n_nodes, m
        fixed = dict(fixed)
        plane = set(int(i) for i in plane) - set(fixed)
        rows, cols, vals = [], [], []
        offset = np.zeros(n_nodes * m)
        col = 0
        for i in range(n_nodes):
            if i in fixed:
                offset[i * m:(i + 1) * m] = fixed[i]
            elif i in plane:
                for k in range(basis.shape[1]):
                    for c in range(m):
                        if basis[c, k] != 0.0:
                            rows.append(i * m + c)
                            cols.append(col)
                            vals.append(basis[c, k])
                    col += 1
            else:
                for c in range(m):
                    rows.append(i * m + c)
                    cols.append(col)
                    vals.append(1.0)
                    col += 1
        self.n_free = col
        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes * m, col))
        self.PT = self.P.T.tocsr()
        self.offset = offset

    def full(self, z):
        return self.P @ z + self.offset

    def reduce(self, u_flat):
        """Least-squares inverse (exact for admissible u)."""
        return self.PT @ (u_flat - self.offset)

    def grad(self, g_full):
        return self.PT @ g_full

    def hess(self, H_full):
        return (self.PT @ H_full @ self.P).tocsc()
