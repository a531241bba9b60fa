import numpy as np
import pytest

from brakeorb import Field2D, Grid2D, hamiltonian_identities, minimize_strip, pde_residual
from brakeorb.errors import ConfigurationError, NonConvergence
from brakeorb.fiber import default_qbar, estimate_ep
from brakeorb.strip2d import (action_unfolded, fiber_series, radial_clamp, reduced_energy, stay_in_audit,
                              strip_gradient_check, strip_map, tail_correction_strip, tilde_u_strip,
                              unfold_strip)


@pytest.fixture(scope="module")
def strip20(strip_sweep):
    return strip_sweep.solutions[0]


def test_gradient(tc, tc_conns):
    assert strip_gradient_check(tc, tc_conns, Grid2D.from_spacing(20.0, 10.0, 0.1, 0.1)) <= 1e-6


def test_energy_upper_bound(strip_sweep):
    for L, sol in zip((20.0, 40.0, 80.0), strip_sweep.solutions):
        assert sol.action <= sol.c0 * L + sol.C0
        assert sol.action >= sol.c0 * L - 1e-8  # every fiber costs at least c0 (omega >= 0)


def test_unfolded_action(tc, strip20):
    f = strip20.field
    x, vals = unfold_strip(f, tc.gamma)
    assert x[-1] - x[0] == pytest.approx(20.0)
    reduced = 4.0 * reduced_energy(tc, f.values, f.grid)
    assert action_unfolded(tc, x, vals, f.grid) == pytest.approx(reduced, rel=1e-12)
    assert strip20.action == pytest.approx(reduced + tail_correction_strip(tc, f), rel=1e-12)


def test_identities_at_L40(tc, tc_conns, strip40):
    f = strip40.field
    ham = hamiltonian_identities(tc, f, tc_conns)
    assert pde_residual(tc, f) <= 1e-2
    assert ham.omega_tilde_max <= 1e-3
    assert ham.A_variation <= 1e-3 * (1.0 + abs(ham.omega))
    assert ham.omega >= -1e-6
    assert np.all(ham.ux_bound_gap >= -1e-3)  # |u_x|^2/2 <= J - c0 + |omega| up to A


def test_x0_fiber_lies_on_the_fixed_plane(strip40):
    assert np.all(strip40.field.values[0, :, 0] == 0.0)


def test_gamma_conjugate_guesses_give_equal_actions(tc, tc_conns):
    grid = Grid2D.from_spacing(20.0, 10.0, 0.1, 0.1)
    u0 = tilde_u_strip(tc_conns, grid)
    rng = np.random.default_rng(0)
    bump = 0.05 * rng.standard_normal(u0.shape)
    bump[:, [0, -1]] = 0.0
    bump[0, :, 0] = 0.0
    a = minimize_strip(tc, tc_conns, 20.0, grid=grid, u0=u0 + bump)
    b = minimize_strip(tc, tc_conns, 20.0, grid=grid, u0=(u0 + bump) @ tc.gamma.T)
    assert abs(a.action - b.action) <= 1e-10
    assert np.abs(a.field.values @ tc.gamma.T - b.field.values).max() <= 1e-8


def test_trap_band_is_inside_the_strip(strip_sweep):
    for sol in strip_sweep.solutions:
        assert sol.trap_d < sol.field.grid.Y - 1.0


def test_short_strip_fails_to_converge(tc, tc_conns):
    with pytest.raises(NonConvergence):
        minimize_strip(tc, tc_conns, 2.0)


def test_connection_grid_must_match(tc, tc_conns):
    with pytest.raises(ConfigurationError):
        minimize_strip(tc, tc_conns, 20.0, hy=0.05)


def test_strip_needs_gamma_fixing_the_minima(scalar):
    with pytest.raises(ConfigurationError):
        strip_map(scalar, Grid2D.from_spacing(20.0, 10.0, 0.5, 0.5))


def test_radial_clamp_does_not_raise_the_action(tc, strip20):
    f = strip20.field
    big = Field2D(f.grid, f.values * 3.0)
    g, rep = radial_clamp(tc, big, strip20.M)
    assert rep.clamped > 0 and not rep.h1_violation
    assert np.linalg.norm(g.values, axis=-1).max() <= strip20.M * (1 + 1e-12)


def test_stay_in_audit(tc, tc_conns, strip40):
    qbar = default_qbar(tc_conns[1])
    series = fiber_series(strip40.field, tc_conns, qbar)
    ep = estimate_ep(tc, tc_conns, qbar)
    audit = stay_in_audit(series, strip40.field.grid.x, qbar, strip40.C0, ep.value)
    assert audit.defined and audit.passed
    assert audit.x_p <= audit.bound


def test_fiber_series_ordering(strip40, tc_conns):
    series = fiber_series(strip40.field, tc_conns)
    q = np.array([d.q for d in series])
    assert len(series) == strip40.field.grid.nx
    assert q[0] > q[-1] and q[-1] <= 1e-3
