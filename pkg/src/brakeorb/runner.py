"""Mode pipelines behind the command line: configuration, checks, artifacts, manifest."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import brake1d, diagnostics, fieldio, profile1d, strip2d
from .errors import ConfigurationError
from .fiber import default_qbar, estimate_ep, q1_gradient_check
from .grids import Field2D, Grid1D, Grid2D
from .optim import MinimizeConfig
from .potential import Kind, Potential, nondegeneracy_constants

MODES = ("connection", "brake", "strip", "sweepT", "sweepL", "verify")
GRAD_TOL = 1e-6

_REQUIRED = {"connection": (), "brake": ("T",), "strip": ("L",), "sweepT": ("T_list",),
             "sweepL": ("L_list",), "verify": ("field",)}

_DEFAULTS = {
    "connection": {"lo": None, "hi": None, "h": None},
    "brake": {"h": 0.01, "channel_hint": 1, "energy_tol": 5e-4},
    "strip": {"Y": 10.0, "hx": 0.1, "hy": 0.1},
    "sweepT": {"h": 0.01, "q": 0.1, "channel_hint": 1, "energy_tol": 5e-4},
    "sweepL": {"Y": 10.0, "hx": 0.1, "hy": 0.1, "p_star": None},
    "verify": {},
}


class CheckFailed(Exception):
    def __init__(self, names):
        super().__init__("failed checks: " + ", ".join(names))
        self.names = list(names)


@dataclass
class RunConfig:
    mode: str
    potential: dict
    params: dict
    minimize: dict
    seed: int = 0
    out: str = "out"
    threads: int = 1

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(doc) - {"mode", "potential", "params", "minimize", "seed", "out", "threads"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        mode = doc.get("mode")
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
        pot = doc.get("potential", {"kind": "ScalarQuartic"})
        params = dict(doc.get("params") or {})
        missing = [k for k in _REQUIRED[mode] if k not in params]
        if missing:
            raise ConfigurationError(f"mode {mode!r} requires params {missing}")
        allowed = set(_DEFAULTS[mode]) | set(_REQUIRED[mode])
        extra = set(params) - allowed
        if extra:
            raise ConfigurationError(f"unknown params for mode {mode!r}: {sorted(extra)}")
        merged = dict(_DEFAULTS[mode])
        merged.update(params)
        try:
            mcfg = MinimizeConfig(**(doc.get("minimize") or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad minimize config: {exc}") from exc
        cfg = cls(mode=mode, potential=pot, params=merged, minimize=mcfg.to_json(),
                  seed=int(doc.get("seed", 0)), out=str(doc.get("out", "out")),
                  threads=int(doc.get("threads", 1)))
        if mode != "verify":
            cfg.build_potential()
        return cfg

    def build_potential(self):
        try:
            return Potential.from_json(self.potential)
        except (TypeError, AttributeError) as exc:
            raise ConfigurationError(f"bad potential spec: {exc}") from exc

    def minimize_config(self):
        return MinimizeConfig(**self.minimize)

    def to_json(self):
        return {"mode": self.mode, "potential": self.potential, "params": self.params,
                "minimize": self.minimize, "seed": self.seed, "threads": self.threads}


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return RunConfig.from_json(doc)


# --- manifest helpers ------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


class Report:
    """Collects residuals, fitted constants, named checks and artifact paths for one run."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.residuals = {}
        self.fits = {}
        self.checks = {}
        self.artifacts = []

    def check(self, name, value, tol, passed=None, kind="le"):
        if passed is None:
            passed = bool(value <= tol) if kind == "le" else bool(value >= tol)
        self.checks[name] = {"value": value, "tol": tol, "passed": bool(passed)}
        return passed

    def failed(self):
        return [k for k, v in self.checks.items() if not v["passed"]]

    def save_field(self, name, obj, provenance):
        fieldio.save_field(self.out / name, obj, _clean(provenance))
        self.artifacts += [name, name + ".json"]

    def write_csv(self, name, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.artifacts.append(name)

    def write_json(self, name, doc):
        (self.out / name).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True))
        self.artifacts.append(name)

    def manifest(self, cfg):
        failed = self.failed()
        doc = {"config": cfg.to_json(), "residuals": self.residuals, "fits": self.fits,
               "checks": self.checks, "artifacts": sorted(self.artifacts),
               "status": "pass" if not failed else "fail", "failed_checks": failed}
        (self.out / "manifest.json").write_text(json.dumps(_clean(doc), indent=2, sort_keys=True))
        return doc


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# --- pipelines -----------------------------------------------------------------------


def _connection_grid(p, params):
    scalar = p.kind is Kind.SCALAR_QUARTIC
    lo = params.get("lo") if params.get("lo") is not None else (-12.0 if scalar else -10.0)
    hi = params.get("hi") if params.get("hi") is not None else (12.0 if scalar else 10.0)
    h = params.get("h") if params.get("h") is not None else (0.01 if scalar else 0.1)
    return Grid1D.from_spacing(float(lo), float(hi), float(h))


def _connections(p, grid, cfg):
    if p.kind is Kind.SCALAR_QUARTIC:
        c = profile1d.solve_connection(p, grid, +1, cfg)
        return (c, c)
    return profile1d.solve_pair(p, grid, cfg)


def run_connection(cfg, rep):
    p = cfg.build_potential()
    mcfg = cfg.minimize_config()
    grid = _connection_grid(p, cfg.params)
    cfg.params.update(lo=grid.lo, hi=grid.hi, h=grid.h)
    conns = _connections(p, grid, mcfg)
    conn = conns[1]
    spec = profile1d.operator_T_spectrum(p, conn)
    mu = profile1d.estimate_mu(p, conn, spectrum=spec, seed=cfg.seed)
    rep.residuals.update(c0=min(c.action for c in conns), action_plus=conn.action,
                         action_minus=conns[0].action, equipartition=conn.equipartition,
                         endpoint_ok=conn.endpoint_ok, collapsed=conn.collapsed,
                         T_eigenvalues=spec.eigenvalues, zero_overlap=spec.zero_overlap,
                         simple_zero=spec.simple_zero, iters=conn.iters)
    rep.fits.update(tail=conn.sidecar()["tail_k"], tail_K=conn.sidecar()["tail_K"],
                    mu_hat=mu.mu_hat, mu_sharp=mu.mu_sharp, mu=mu.mu)
    gerr = profile1d.chain_gradient_check(p, grid, seed=cfg.seed)
    rep.check("gradient_J_R", gerr, GRAD_TOL)
    rep.check("endpoints_in_ball", 0.0, 0.0, passed=conn.endpoint_ok)
    rep.check("simple_zero_eigenvalue", float(spec.eigenvalues[0]), 0.0, passed=spec.simple_zero)
    rep.check("zero_mode_overlap", spec.zero_overlap, 0.99, kind="ge")
    if p.kind is Kind.SCALAR_QUARTIC:
        d, shift = profile1d.distance_to_tanh(conn)
        rep.residuals.update(tanh_distance=d, tanh_shift=shift)
        rep.check("tanh_distance", d, 1e-3)
        rep.check("action_oracle", abs(conn.action - 2.0 * np.sqrt(2.0) / 3.0), 1e-3)
    for c in ({conns[0].sign.value: conns[0], conns[1].sign.value: conns[1]}).values():
        name = f"connection_{c.sign.value}.bin"
        rep.save_field(name, c.path, {"mode": "connection", "potential": cfg.potential, **c.sidecar()})


def run_brake(cfg, rep):
    p = cfg.build_potential()
    mcfg = cfg.minimize_config()
    T, h = float(cfg.params["T"]), float(cfg.params["h"])
    orb = brake1d.minimize_brake(p, T, h=h, cfg=mcfg, channel_hint=int(cfg.params["channel_hint"]))
    er = brake1d.energy_residual(p, orb)
    rep.residuals.update(action=orb.action, energy_residual=er,
                         el_residual_3=brake1d.el_residual(p, orb, 3),
                         el_residual_5=brake1d.el_residual(p, orb, 5), max_abs=orb.max_abs,
                         ball_radius_M=orb.ball_radius_M, C0=orb.C0, iters=orb.iters,
                         turning_point=orb.turning_point, finite_time_contact=orb.finite_time_contact)
    rep.check("gradient_J_0T", brake1d.brake_gradient_check(p, T, h, seed=cfg.seed), GRAD_TOL)
    rep.check("energy_residual", er, float(cfg.params["energy_tol"]))
    rep.check("inside_ball_M", orb.max_abs, orb.ball_radius_M)
    if p.kind is Kind.SCALAR_QUARTIC:
        amp = brake1d.period_amplitude_oracle(p, T)
        diff = abs(float(orb.turning_point[0]) - amp)
        rep.residuals["oracle_amplitude"] = amp
        rep.check("amplitude_oracle", diff, 1e-3)
    rep.save_field("brake_quarter.bin", orb.quarter,
                   {"mode": "brake", "potential": cfg.potential, "T": T, "reflection": orb.reflection})


def _strip_rows(f, series, ham):
    A = np.interp(f.grid.x, ham.x, ham.A)
    B = np.interp(f.grid.x, ham.x, ham.B)
    return [(float(x), d.q, d.q1, d.h, d.sign.value, A[i], B[i])
            for i, (x, d) in enumerate(zip(f.grid.x, series))]


def _strip_checks(p, f, conns, rep, prefix=""):
    ham = strip2d.hamiltonian_identities(p, f, conns)
    pde = strip2d.pde_residual(p, f)
    Bm = np.eye(p.m) - p.plus_basis() @ p.plus_basis().T
    off = float(np.abs(f.values[0] @ Bm.T).max())
    rep.residuals.update({prefix + "omega": ham.omega, prefix + "omega_tilde": ham.omega_tilde_max,
                          prefix + "A_max": ham.A_variation, prefix + "pde_residual": pde,
                          prefix + "x0_off_plane": off})
    rep.check(prefix + "pde_residual", pde, 1e-2)
    rep.check(prefix + "omega_tilde", ham.omega_tilde_max, 1e-3)
    rep.check(prefix + "A_variation", ham.A_variation, 1e-3 * (1.0 + abs(ham.omega)))
    rep.check(prefix + "omega_lower", ham.omega, -1e-6, kind="ge")
    rep.check(prefix + "x0_fiber_on_fixed_plane", off, 0.0)
    return ham


def _strip_connections(p, Y, hy, mcfg):
    return _connections(p, Grid1D.from_spacing(-Y, Y, hy), mcfg)


def run_strip(cfg, rep):
    p = cfg.build_potential()
    mcfg = cfg.minimize_config()
    L, Y = float(cfg.params["L"]), float(cfg.params["Y"])
    hx, hy = float(cfg.params["hx"]), float(cfg.params["hy"])
    conns = _strip_connections(p, Y, hy, mcfg)
    sol = strip2d.minimize_strip(p, conns, L, Y, cfg=mcfg, hx=hx, hy=hy)
    f = sol.field
    rep.residuals.update(action=sol.action, c0=sol.c0, C0=sol.C0, M=sol.M, iters=sol.iters,
                         grad_norm=sol.grad_norm, trap_d=sol.trap_d)
    rep.check("gradient_strip", strip2d.strip_gradient_check(p, conns, f.grid, seed=cfg.seed), GRAD_TOL)
    rep.check("gradient_J_R", profile1d.chain_gradient_check(p, conns[1].grid, seed=cfg.seed), GRAD_TOL)
    rep.check("gradient_q1", q1_gradient_check(conns, seed=cfg.seed), GRAD_TOL)
    rep.check("energy_bound", sol.action, sol.c0 * L + sol.C0)
    ham = _strip_checks(p, f, conns, rep)
    series = strip2d.fiber_series(f, conns, default_qbar(conns[1]))
    rep.write_csv("strip_fibers.csv", ["x", "q", "q1", "h", "sign", "A", "B"], _strip_rows(f, series, ham))
    rep.save_field("strip.bin", f, {"mode": "strip", "potential": cfg.potential, "L": L, "Y": Y,
                                    "connection_h": hy})


def run_sweep_T(cfg, rep):
    p = cfg.build_potential()
    mcfg = cfg.minimize_config()
    h = float(cfg.params["h"])
    rows, skipped = brake1d.sweep_T(p, cfg.params["T_list"], h=h, cfg=mcfg, q=float(cfg.params["q"]),
                                    channel_hint=int(cfg.params["channel_hint"]))
    rep.write_csv("sweepT.csv", ["T", "action", "W_turn", "tau_q", "window_dist", "tanh_dist",
                                 "energy_residual"],
                  [(r.T, r.action, r.W_turn, r.tau_q, r.window_dist, r.tanh_dist, r.energy_residual)
                   for r in rows])
    rep.residuals["skipped_T"] = skipped
    rep.residuals["window_dist"] = [r.window_dist for r in rows]
    rep.residuals["energy_residual"] = [r.energy_residual for r in rows]
    rep.check("gradient_J_0T", brake1d.brake_gradient_check(p, rows[0].T, h, seed=cfg.seed), GRAD_TOL)
    wd = [r.window_dist for r in rows]
    rep.check("window_dist_decreasing", wd[-1], wd[0],
              passed=all(b < a for a, b in zip(wd, wd[1:])) and wd[-1] <= 1e-3)
    rep.check("energy_residual", max(r.energy_residual for r in rows), float(cfg.params["energy_tol"]))
    if p.kind is Kind.SCALAR_QUARTIC:
        rep.residuals["tanh_dist"] = [r.tanh_dist for r in rows]
        rep.check("tanh_dist_final", rows[-1].tanh_dist, 1e-3)


def sweep_L_checks(p, conns, table, rep, mu_hat, p_star=None):
    """Convergence and decay checks on a finished L-sweep."""
    rows = table.rows
    c0d = [r.dist_c0 for r in rows[1:]]
    c1d = [r.dist_c1 for r in rows[1:]]
    om = [r.omega for r in rows]
    rep.check("window_C0_decreasing", c0d[-1], c0d[0], passed=all(b < a for a, b in zip(c0d, c0d[1:])))
    rep.check("window_C1_decreasing", c1d[-1], c1d[0], passed=all(b < a for a, b in zip(c1d, c1d[1:])))
    rep.check("omega_nonincreasing", om[-1], 1e-3,
              passed=all(b <= a + 1e-12 for a, b in zip(om, om[1:])) and om[-1] <= 1e-3)
    rep.check("q_end_final", rows[-1].q_end, 1e-2)
    rep.check("eta_drift", table.eta_drift, 5e-2)
    gamma_lo = nondegeneracy_constants(p).gamma_lo
    half = 0.5 * np.sqrt(mu_hat)
    rates = [r.q_rate for r in rows]
    r2 = [r.q_r2 for r in rows]
    rep.check("q_decay_rate", min(rates), 0.9 * half, kind="ge")
    rep.check("q_decay_r2", min(r2), 0.9, kind="ge")
    yr = [r.y_rate for r in rows]
    rep.check("y_decay_rate", min(yr), 0.9 * gamma_lo, kind="ge")
    spread = (max(yr) - min(yr)) / max(yr)
    rep.check("y_decay_stable", spread, 0.1)
    qbar = default_qbar(conns[1])
    p_star = qbar if p_star is None else p_star
    ep = estimate_ep(p, conns, p_star)
    C0 = table.solutions[-1].C0
    audit = strip2d.stay_in_audit(table.series[-1], table.solutions[-1].field.grid.x, p_star, C0, ep.value)
    rep.fits.update(e_p_star=ep.value, p_star=p_star, x_p=audit.x_p, x_p_bound=audit.bound,
                    C2_vy=max(r.C2_vy for r in rows))
    rep.check("stay_in", audit.x_p, audit.bound, passed=audit.passed)
    return audit


def run_sweep_L(cfg, rep):
    p = cfg.build_potential()
    mcfg = cfg.minimize_config()
    Y, hx, hy = float(cfg.params["Y"]), float(cfg.params["hx"]), float(cfg.params["hy"])
    conns = _strip_connections(p, Y, hy, mcfg)
    mu = profile1d.estimate_mu(p, conns[1], seed=cfg.seed)
    rep.check("gradient_J_R", profile1d.chain_gradient_check(p, conns[1].grid, seed=cfg.seed), GRAD_TOL)
    rep.check("gradient_strip", strip2d.strip_gradient_check(p, conns, Grid2D.from_spacing(
        min(cfg.params["L_list"]), Y, hx, hy), seed=cfg.seed), GRAD_TOL)
    rep.check("gradient_q1", q1_gradient_check(conns, seed=cfg.seed), GRAD_TOL)
    table = diagnostics.sweep_L(p, conns, cfg.params["L_list"], hx=hx, hy=hy, cfg=mcfg, mu_hat=mu.mu_hat)
    names = list(diagnostics.SweepRow.__dataclass_fields__)
    rep.write_csv("sweepL.csv", names, [[getattr(r, k) for k in names] for r in table.rows])
    rep.fits.update(mu_hat=mu.mu_hat, mu_sharp=mu.mu_sharp, eta=table.eta, eta_drift=table.eta_drift)
    sweep_L_checks(p, conns, table, rep, mu.mu_hat, cfg.params.get("p_star"))
    rep.write_json("sweepL.json", {"rows": [r.to_json() for r in table.rows], "eta": table.eta,
                                   "eta_drift": table.eta_drift, "window": table.window})


def run_verify(cfg, rep, path=None):
    path = Path(path or cfg.params["field"])
    if not path.is_file():
        raise ConfigurationError(f"no field file at {path}")
    obj = fieldio.load_field(path)
    prov = fieldio.load_sidecar(path).get("provenance", {})
    if "potential" not in prov:
        raise ConfigurationError("sidecar has no potential provenance")
    p = Potential.from_json(prov["potential"])
    mcfg = cfg.minimize_config() if cfg is not None else MinimizeConfig()
    mode = prov.get("mode")
    rep.residuals["source_mode"] = mode
    if isinstance(obj, Field2D):
        conns = _strip_connections(p, obj.grid.Y, float(prov.get("connection_h", obj.grid.hy)), mcfg)
        _strip_checks(p, obj, conns, rep)
    elif mode == "brake":
        R = np.asarray(prov["reflection"], dtype=float)
        orb = brake1d.BrakeOrbit(quarter=obj, T=float(prov["T"]), action=brake1d.action_J0T(p, obj),
                                 energy_constant=-float(p.W(obj.values[-1])), ball_radius_M=float("nan"),
                                 C0=float("nan"), reflection=R, iters=0, initial_action=float("nan"),
                                 history=[], max_abs=float(np.linalg.norm(obj.values, axis=1).max()),
                                 grad_norm=float("nan"))
        er = brake1d.energy_residual(p, orb)
        rep.residuals.update(energy_residual=er, el_residual_5=brake1d.el_residual(p, orb, 5))
        rep.check("energy_residual", er, 5e-4)
    elif mode == "connection":
        conn = profile1d.Connection(path=obj, sign=profile1d.Sign(prov.get("sign", "plus")),
                                    action=profile1d.action_JR(p, obj))
        eq = profile1d.equipartition_residual(p, conn)
        rep.residuals.update(action=conn.action, equipartition=eq)
        if "action" in prov:
            rep.check("action_matches_sidecar", abs(conn.action - prov["action"]), 1e-10)
        rep.check("equipartition", eq, 1e-3)
    else:
        raise ConfigurationError(f"cannot verify a field from mode {mode!r}")


PIPELINES = {"connection": run_connection, "brake": run_brake, "strip": run_strip,
             "sweepT": run_sweep_T, "sweepL": run_sweep_L, "verify": run_verify}


def execute(cfg, out=None):
    """Run one configured pipeline; returns the manifest. Raises CheckFailed on failed checks."""
    rep = Report(out or cfg.out)
    PIPELINES[cfg.mode](cfg, rep)
    doc = rep.manifest(cfg)
    if doc["failed_checks"]:
        raise CheckFailed(doc["failed_checks"])
    return doc
