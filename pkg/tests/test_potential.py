import json

import numpy as np
import pytest

from brakeorb import Potential, check_h1, custom, nondegeneracy_constants, sigma_and_M
from brakeorb.errors import ConfigurationError, Degenerate, RMaxTooSmall


def _points(p, rng, n=50, scale=1.5):
    return scale * rng.standard_normal((n, p.m))


@pytest.mark.parametrize("name", ["scalar", "tc"])
def test_minima_are_nondegenerate_zeros(name, request):
    p = request.getfixturevalue(name)
    for a in p.minima:
        assert p.W(a) == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(p.grad(a), 0.0, atol=1e-14)
        assert np.linalg.eigvalsh(p.hess(a)).min() > 0.0


@pytest.mark.parametrize("name", ["scalar", "tc"])
def test_gradient_and_hessian_match_finite_differences(name, request, rng):
    p = request.getfixturevalue(name)
    eps = 1e-6
    for u in _points(p, rng):
        g_fd = np.array([(p.W(u + eps * e) - p.W(u - eps * e)) / (2 * eps) for e in np.eye(p.m)])
        H_fd = np.array([(p.grad(u + eps * e) - p.grad(u - eps * e)) / (2 * eps) for e in np.eye(p.m)])
        assert np.allclose(p.grad(u), g_fd, rtol=1e-6, atol=1e-6)
        assert np.allclose(p.hess(u), H_fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("name", ["scalar", "tc"])
def test_symmetries(name, request, rng):
    p = request.getfixturevalue(name)
    u = _points(p, rng)
    assert np.allclose(p.W(u @ p.gamma.T), p.W(u), rtol=1e-14)
    R = p.brake_reflection()
    assert np.allclose(p.W(u @ R.T), p.W(u), rtol=1e-14)
    assert np.array_equal(R @ p.a_minus, p.a_plus)


def test_two_channel_gamma_fixes_both_minima(tc):
    assert np.array_equal(tc.gamma @ tc.a_minus, tc.a_minus)
    assert np.array_equal(tc.gamma @ tc.a_plus, tc.a_plus)


def test_gamma_must_be_an_involution():
    with pytest.raises(ConfigurationError):
        custom(1, [-1.0], [1.0], [[2.0]], W=lambda u: u[..., 0] ** 2)


def test_nondegeneracy_constants_scalar(scalar, rng):
    c = nondegeneracy_constants(scalar)
    assert c.gamma_lo == pytest.approx(np.sqrt(2.0) * 0.95)
    assert c.Gamma_hi == pytest.approx(np.sqrt(2.0) * 1.05)
    for a in scalar.minima:
        z = rng.uniform(-c.r0, c.r0, (200, 1))
        w = scalar.W(a + z)
        r2 = np.sum(z * z, axis=1)
        assert np.all(w >= 0.5 * c.gamma_lo ** 2 * r2 - 1e-15)
        assert np.all(w <= 0.5 * c.Gamma_hi ** 2 * r2 + 1e-15)


def test_nondegeneracy_constants_two_channel(tc):
    c = nondegeneracy_constants(tc)
    assert c.gamma_lo == pytest.approx(np.sqrt(2 * 0.6) * 0.95)
    assert c.r0 > 0.0
    for root, a in zip(c.hess_sqrt, tc.minima):
        assert np.allclose(root @ root, tc.hess(a))


def test_degenerate_minimum_is_rejected():
    p = custom(1, [-1.0], [1.0], [[-1.0]], W=lambda u: (1 - u[..., 0] ** 2) ** 4,
               grad=lambda u: (-8 * u[..., 0] * (1 - u[..., 0] ** 2) ** 3)[..., None],
               hess=lambda u: (np.zeros_like(u[..., 0]) + 0.0)[..., None, None])
    with pytest.raises(Degenerate):
        nondegeneracy_constants(p)


@pytest.mark.parametrize("name", ["scalar", "tc"])
def test_sigma_and_M_solves_the_radius_equation(name, request):
    p = request.getfixturevalue(name)
    C0 = 3.0
    sigma, M = sigma_and_M(p, C0, 16.0)
    lo = 2.0 * max(np.linalg.norm(p.a_plus), np.linalg.norm(p.a_minus))
    assert M > lo
    assert np.sqrt(2.0) * sigma.integral(lo, M) == pytest.approx(C0, rel=1e-9)
    with pytest.raises(RMaxTooSmall):
        sigma_and_M(p, C0, 1.0)


@pytest.mark.parametrize("name", ["scalar", "tc"])
def test_h1_radial_monotonicity(name, request):
    p = request.getfixturevalue(name)
    rep = check_h1(p, 2.0)
    assert rep.passed
    assert rep.liminf_proxy > 0.0


def test_h1_fails_for_a_decaying_potential():
    p = custom(1, [-1.0], [1.0], [[-1.0]], W=lambda u: (1 - u[..., 0] ** 2) ** 2 * np.exp(-u[..., 0] ** 2))
    assert not check_h1(p, 2.0).passed


def test_json_round_trip(tc, scalar):
    for p in (tc, scalar):
        q = Potential.from_json(json.dumps(p.to_json()))
        assert q.kind is p.kind and q.params == p.params and q.m == p.m


def test_custom_and_unknown_kinds_do_not_serialize():
    p = custom(1, [-1.0], [1.0], [[-1.0]], W=lambda u: (1 - u[..., 0] ** 2) ** 2)
    with pytest.raises(ConfigurationError):
        p.to_json()
    with pytest.raises(ConfigurationError):
        Potential.from_json({"kind": "Nope"})
