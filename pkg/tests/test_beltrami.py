import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disc_points
from planar_degen.beltrami import (
    LipschitzMap,
    beltrami_quotients,
    counterexample_audits,
    counterexample_stilde_audit,
    g_over_r,
    g_prime,
    g_profile,
    gamma_classify,
    linear_analyze,
    lipschitz_audit,
    minty_backward,
    minty_forward,
    minty_round_trip,
    to_complex,
    to_plane,
    zero_map,
)
from planar_degen.duality import mollify
from planar_degen.field_core import make_catalog_field, monotonicity_gap


def test_forward_identity_is_zero():
    H, phi = minty_forward(make_catalog_field("identity"))
    z = np.array([0.3 + 0.1j, -1.0 + 2.0j])
    assert np.allclose(H(z), 0.0, atol=1e-14)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_p_laplacian_quotient_closed_form(p):
    G = make_catalog_field("p_laplacian", p=p)
    H, phi = minty_forward(G)
    rng = np.random.default_rng(0)
    xi = disc_points(rng, 100, 2.0, inner=0.05)
    w = phi(xi)
    q = (H(w) - H(phi(np.zeros((1, 2))))) / np.conj(w - phi(np.zeros((1, 2))))
    r = np.linalg.norm(xi, axis=1) ** (p - 2)
    assert np.max(np.abs(q - (1 - r) / (1 + r))) < 1e-6


def test_forward_g0_is_strict_contraction():
    H, _ = minty_forward(make_catalog_field("g0_cubic"))
    assert lipschitz_audit(H, n=10_000) < 1.0


def test_backward_zero_map_gives_identity():
    pair = minty_backward(zero_map())
    z = np.array([1.0 + 2.0j, -0.5j])
    assert np.allclose(pair.F(z), np.conj(z) / 2)
    assert np.allclose(pair.F_star(z), -np.conj(z) / 2j)
    xi = disc_points(np.random.default_rng(1), 50, 2.0)
    assert np.allclose(pair.G(xi), xi, atol=1e-12)


def test_backward_linear_contraction_monotone():
    H = LipschitzMap(lambda z: 0.3 * z + 0.4j * np.conj(z))
    pair = minty_backward(H)
    rng = np.random.default_rng(2)
    a, b = disc_points(rng, 2000, 3.0), disc_points(rng, 2000, 3.0)
    assert np.all(monotonicity_gap(pair.G, a, b) > 0)
    assert np.all(monotonicity_gap(pair.G_star, a, b) > 0)


def test_round_trip_identity_and_mollified_g0():
    x = np.linspace(-2, 2, 11)
    X, Y = np.meshgrid(x, x)
    pts = np.stack([X.ravel(), Y.ravel()], -1)
    pts = pts[np.linalg.norm(pts, axis=1) <= 2]
    assert minty_round_trip(make_catalog_field("identity"), pts) <= 1e-6
    assert minty_round_trip(mollify(make_catalog_field("g0_cubic"), 0.05), pts) <= 1e-6


def test_duality_identities(bundle):
    # G* agrees with the dual of G: -i G*(i G(xi)) = xi
    xi = disc_points(np.random.default_rng(3), 200, 1.5)
    g = bundle.G(xi)
    back = bundle.pair.G_star(np.stack([-g[:, 1], g[:, 0]], -1))
    assert np.allclose(np.stack([back[:, 1], -back[:, 0]], -1), xi, atol=1e-10)


def test_quotients_zero_map():
    L, gp, gm = beltrami_quotients(zero_map(), np.array([0.2 + 0.1j]), np.array([1e-3]))
    assert L[0] == 0 and gp[0] == 1 and gm[0] == 1
    with pytest.raises(ValueError):
        beltrami_quotients(zero_map(), np.array([0.0]), np.array([0.0]))


def test_gamma_counterexample_circle_and_interior(bundle):
    t = np.pi / 3
    tang = 1j * np.exp(1j * t)
    s = gamma_classify(bundle.H, np.exp(1j * t), offset_scales=[1e-2, 1e-3, 1e-4], directions=[tang, -tang])
    assert s.gamma_plus_min[-1] < 0.05 and s.gamma_minus_min[-1] < 0.05
    assert s.verdict_plus == "decreasing_to_zero"
    # tangential difference quotient tends to -e^{4 i t}
    assert abs(s.L_at_min[-1] + np.exp(4j * t)) < 1e-3
    s0 = gamma_classify(bundle.H, 0.0)
    assert s0.gamma_plus_min.min() > 0.2 and s0.gamma_minus_min.min() > 0.2


def test_linear_constancy_cases():
    v = linear_analyze(0, 1)
    assert v.forces_constancy and v.constant_part == "im"
    v = linear_analyze(0, -1)
    assert v.forces_constancy and v.constant_part == "re"
    with pytest.raises(ValueError):
        linear_analyze(0.5, 0.2)


def test_linear_mu_one():
    v = linear_analyze(1, 0)
    assert not v.forces_constancy and v.residual() == 0.0
    A, B = v.counterexample
    # f = (1 + i) x: f_z = f_zbar = (1 + i)/2
    assert np.isclose(A, B) and np.isclose(A, (1 + 1j) / 2)


@pytest.mark.parametrize("mu,nu", [(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-1, 0), (0.25, -0.75), (1, 0)])
def test_linear_real_branches(mu, nu):
    v = linear_analyze(mu, nu)
    A, B = v.counterexample
    assert v.residual() <= 1e-12
    fx, fy = A + B, 1j * (A - B)
    assert np.hypot(fx.real, fy.real) > 0 and np.hypot(fx.imag, fy.imag) > 0


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0.01, 0.99))
def test_linear_complex_property(a, b, s):
    mu, nu = s * np.exp(1j * a), (1 - s) * np.exp(1j * b)
    if abs(mu) < 1e-12 and abs(abs(nu) - 1) < 1e-12:
        return
    v = linear_analyze(mu, nu)
    assert not v.forces_constancy
    assert v.residual() <= 1e-12


def test_profile_g():
    assert g_profile(1.0) == 1.0
    r = np.linspace(0, 4, 100_001)
    r = r[np.abs(r - 1) > 1e-9]
    assert np.max(g_over_r(r)) < 1 and np.max(np.abs(g_prime(r))) / 3 < 1
    assert np.all(g_profile(np.linspace(3, 6, 50)) == 0)


def test_counterexample_closed_forms(bundle):
    t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    z = 0.7 * np.exp(1j * t)
    assert np.allclose(bundle.f_z(z), 1j * np.exp(1j * t))
    assert np.allclose(bundle.f_zbar(z), bundle.f_z(z) ** 3 / 3)
    # f = 2 (u + i v)
    x = to_plane(z)
    assert np.allclose(bundle.f(z), 2 * (bundle.u(x) + 1j * bundle.v(x)))
    # grad u lies on F(i e^{it})
    assert np.allclose(to_complex(bundle.grad_u(x)), bundle.F(1j * np.exp(1j * t)), atol=1e-12)


def test_counterexample_beltrami_equation(bundle):
    z = 0.5 * np.exp(1j * np.linspace(0.1, 6, 40))
    assert np.allclose(bundle.f_zbar(z), bundle.H(bundle.f_z(z)), atol=1e-12)


def test_stilde_audit(bundle):
    a = counterexample_stilde_audit(bundle)
    rows = {round(r["theta"], 6): r for r in a["rows"]}
    assert rows[round(np.pi / 4, 6)]["max_q_lower"] == pytest.approx(2.0, rel=0.1)
    assert rows[round(np.pi / 3, 6)]["max_q_lower"] == pytest.approx(8 / 3, rel=0.1)
    assert a["growth_monotone"]


def test_counterexample_audit_rows(bundle):
    rows = counterexample_audits(bundle)
    names = {r["name"] for r in rows}
    assert {"|f_z|=1", "det grad F", "g constraints"} <= names
    assert all(r["passed"] for r in rows)
