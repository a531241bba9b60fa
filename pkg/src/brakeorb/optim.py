"""Damped Newton minimization with Armijo backtracking on sparse problems."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence

log = logging.getLogger(__name__)


@dataclass
class MinimizeConfig:
    max_iters: int = 200
    grad_tol: float = 1e-11
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    memory: int = 10  # L-BFGS history, used where no Hessian is available
    seed: int = 0

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def to_json(self):
        return {"max_iters": self.max_iters, "grad_tol": self.grad_tol,
                "armijo_c1": self.armijo_c1, "backtrack": self.backtrack,
                "memory": self.memory, "seed": self.seed}


@dataclass
class OptResult:
    z: np.ndarray
    f: float
    grad_norm: float
    iters: int
    converged: bool
    history: list = field(default_factory=list)


def newton_minimize(fun_grad, hess, z0, cfg, project=None, callback=None, raise_on_fail=True,
                    mass=1.0):
    """Minimize a smooth function given value+gradient and a sparse Hessian.

    Levenberg damping: the step solves (H + tau * mass * I) d = -g, with tau raised
    until d is a descent direction of positive curvature that the Armijo line search
    accepts, and relaxed after full steps.  ``mass`` is the quadrature weight of one
    unknown, so tau is measured in units of W_uu.  ``project`` maps trial points back
    to the admissible set; ``callback(z, f)`` sees accepted iterates.
    """
    z = np.array(z0, dtype=float)
    if project is not None:
        z = project(z)
    f, g = fun_grad(z)
    history = [f]
    n = z.size
    eye = sp.identity(n, format="csc") * mass
    tau = 0.0
    it = 0
    while it < cfg.max_iters:
        gn = float(np.abs(g).max()) if n else 0.0
        if gn <= cfg.grad_tol:
            break
        it += 1
        H = hess(z).tocsc()
        step = None
        for _ in range(40):
            d = _damped_direction(H, eye, g, tau)
            if d is not None:
                step = _armijo(fun_grad, z, f, g, d, cfg, project)
                if step is not None:
                    break
            tau = max(10.0 * tau, 1e-4)
        if step is None:
            break
        t, zt, ft, gt = step
        tau = tau / 4.0 if (t == 1.0 and tau > 1e-6) else (0.0 if t == 1.0 else tau)
        z, f, g = zt, ft, gt
        history.append(f)
        if callback is not None:
            callback(z, f)
    gn = float(np.abs(g).max()) if n else 0.0
    converged = gn <= cfg.grad_tol
    res = OptResult(z=z, f=float(f), grad_norm=gn, iters=it, converged=converged, history=history)
    if not converged and raise_on_fail:
        raise NonConvergence(f"Newton stopped after {it} iterations, |grad|={gn:.3e}")
    return res


def _damped_direction(H, eye, g, tau):
    try:
        d = spla.splu(H + tau * eye if tau > 0 else H).solve(-g)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(d)):
        return None
    if float(g @ d) >= 0.0 or float(d @ (H @ d)) + tau * float(d @ (eye @ d)) <= 0.0:
        return None
    return d


def _armijo(fun_grad, z, f, g, d, cfg, project, min_t=1e-3):
    """Backtracking line search; gives up (returning None) below ``min_t``."""
    slope = float(g @ d)
    gn = float(np.abs(g).max())
    t = 1.0
    while t >= min_t:
        zt = z + t * d
        if project is not None:
            zt = project(zt)
        ft, gt = fun_grad(zt)
        if ft <= f + cfg.armijo_c1 * t * slope:
            return t, zt, ft, gt
        if abs(ft - f) <= 1e-13 * (1.0 + abs(f)) and float(np.abs(gt).max()) < gn:
            # values agree to rounding; accept on gradient decrease
            return t, zt, ft, gt
        t *= cfg.backtrack
    return None
