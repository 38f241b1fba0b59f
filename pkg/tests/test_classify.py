import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planar_degen.classify import (
    CoveringCertificate,
    CoveringError,
    build_covering,
    certified_radius,
    detect_bad_set,
    sample_ellipticity,
    stilde_inclusion_audit,
)
from planar_degen.field_core import make_catalog_field

SC4 = (1e-1, 1e-2, 1e-3, 1e-4)


@pytest.fixture(scope="module")
def p4_profile():
    return sample_ellipticity(make_catalog_field("p_laplacian", p=4), (-2.2, 2.2, -2.2, 2.2), 0.05, (1e-1, 1e-2, 1e-3))


def test_identity_profile_flat():
    P = sample_ellipticity(make_catalog_field("identity"), (-1, 1, -1, 1), 0.25)
    assert np.allclose(P.lambda_hat, 1.0) and np.allclose(P.Lambda_hat, 1.0)
    assert detect_bad_set(P, 0.5, 2.0) == []


def test_profile_validation():
    f = make_catalog_field("identity")
    with pytest.raises(ValueError):
        sample_ellipticity(f, (-1, 1, -1, 1), 0.5, scales=(1e-3, 1e-2))
    with pytest.raises(ValueError):
        sample_ellipticity(f, (-1, 1, -1, 1), 0.5, n_dirs=8)


def test_p_laplacian_profiles():
    P4 = sample_ellipticity(make_catalog_field("p_laplacian", p=4), (-1, 1, -1, 1), 0.1, SC4)
    lam0 = np.array(P4.at([0, 0])["lambda_scale"])
    Lam0 = np.array(P4.at([0, 0])["Lambda_scale"])
    assert np.all(np.diff(lam0) < 0) and lam0[-1] < 1e-3
    assert Lam0.max() <= 1.0
    away = np.linalg.norm(P4.nodes, axis=-1) >= 0.3
    assert P4.lambda_hat[away].min() > 0
    P15 = sample_ellipticity(make_catalog_field("p_laplacian", p=1.5), (-1, 1, -1, 1), 0.1, SC4)
    Lam0 = np.array(P15.at([0, 0])["Lambda_scale"])
    assert np.all(np.diff(Lam0) > 0) and Lam0[-1] > 1e1
    assert min(P15.at([0, 0])["lambda_scale"]) > 0.4


def test_rotational_profile():
    P = sample_ellipticity(make_catalog_field("rotational_gm", m=0.5), (-1, 1, -1, 1), 0.1, SC4)
    assert P.lambda_hat.min() >= 0.45
    L0 = np.array(P.at([0, 0])["Lambda_scale"])
    assert np.all(np.diff(L0) > 0) and L0[-1] > 5 * L0[0]


def test_separable_bad_set_empty():
    # f' vanishes only on x = 0 (D infinite), g uniformly convex so S is empty
    P = sample_ellipticity(make_catalog_field("separable", f="power:3", g="linear:1"), (-1, 1, -1, 1), 0.1, SC4)
    strip = np.isclose(P.nodes[..., 0], 0.0)
    assert np.all(P.lambda_hat[strip] < 1e-6)
    assert detect_bad_set(P, 1e-3, 10.0) == []


def test_counterexample_bad_set_traces_curve(bundle):
    P = sample_ellipticity(bundle.G, (-1, 1, -1, 1), 0.05)
    comps = detect_bad_set(P, 0.05, 20.0)
    assert len(comps) >= 4
    t = np.linspace(0, 2 * np.pi, 4000)
    curve = np.stack([bundle.F(np.exp(1j * t)).real, bundle.F(np.exp(1j * t)).imag], -1)
    for c in comps:
        pts = P.nodes[c.cells[:, 0], c.cells[:, 1]]
        d = np.min(np.linalg.norm(pts[:, None] - curve[None], axis=-1), axis=1)
        assert d.max() < 0.1


def test_detect_rejects_bad_thresholds(p4_profile):
    with pytest.raises(ValueError):
        detect_bad_set(p4_profile, 0.0, 1.0)


def test_covering_identity():
    P = sample_ellipticity(make_catalog_field("identity"), (-2.5, 2.5, -2.5, 2.5), 0.1, (1e-1, 1e-2))
    c = build_covering(P, 1.0, 0.35, 1.0, 1.0)
    # limited only by grid resolution: the largest multiple of the step below r
    assert c.eta == pytest.approx(0.3)


def test_covering_p4(p4_profile):
    ring = (np.linalg.norm(p4_profile.nodes, axis=-1) <= 2) & (np.linalg.norm(p4_profile.nodes, axis=-1) >= 0.1)
    lam = p4_profile.lambda_hat[ring].min()
    c = build_covering(p4_profile, 1.0, 0.2, lam, 12.0, [[0.0, 0.0]])
    assert 0 < c.eta < 0.2
    # both sides: D and S are disjoint for p = 4, so no bad ball is needed
    assert build_covering(p4_profile, 1.0, 0.2, lam, 12.0, []).eta > 0
    # lower-ellipticity side alone fails at the origin
    with pytest.raises(CoveringError) as ei:
        build_covering(p4_profile, 1.0, 0.2, lam, None, [])
    assert np.min(np.linalg.norm(ei.value.uncovered, axis=1)) < 0.1


def test_covering_preconditions(p4_profile):
    with pytest.raises(ValueError):
        build_covering(p4_profile, 1.0, 0.2, 0.01, 12.0, [[0, 0], [0.5, 0]])
    with pytest.raises(ValueError):
        build_covering(p4_profile, 2.0, 0.2, 0.01, 12.0, [[0, 0]])


def _cert(eta=0.1, M=1.0, lam=1.0, Lam=1.0):
    return CoveringCertificate(M, 0.2, lam, Lam, np.zeros((0, 2)), eta)


def test_certified_radius_golden():
    # identity: omega(t)/t = t, so the floor over [eta/4, M + eta] is eta/4
    r = certified_radius(_cert(), 1.0, 1.0, c0=1.0, c_iter=1.0, monotony_floor=0.025)
    assert r.log_delta_single == -160850.93015815853
    assert r.K == 100
    assert r.log_delta_final == -16085093.015815854
    assert r.delta_single == 0.0  # underflows; the log carries the value
    mp.mp.dps = 40
    ref = -32 * mp.pi / mp.mpf("0.025") ** 2 - mp.log(2) + mp.log(mp.mpf("0.5"))
    assert abs(r.log_delta_single - float(ref)) <= 1e-15 * abs(float(ref))


def test_certified_radius_rejects():
    with pytest.raises(ValueError):
        certified_radius(_cert(), 1.0, 1.0, monotony_floor=0.0)
    with pytest.raises(ValueError):
        certified_radius(_cert(), -1.0, 1.0, monotony_floor=0.1)


def test_certified_radius_scaling():
    a = certified_radius(_cert(lam=1.0, Lam=2.0), 1.0, 1.0, monotony_floor=0.5)
    b = certified_radius(_cert(lam=1.0, Lam=2.0), 2.0, 1.0, monotony_floor=0.5)
    assert b.C_V == pytest.approx(4 * a.C_V)
    assert b.log_delta_single < a.log_delta_single


@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_certified_radius_monotone(floor, eta, g, c0):
    base = certified_radius(_cert(eta=eta), g, g, c0=c0, monotony_floor=floor)
    assert certified_radius(_cert(eta=eta), g, g, c0=c0, monotony_floor=2 * floor).log_delta_single > base.log_delta_single
    assert certified_radius(_cert(eta=2 * eta), g, g, c0=c0, monotony_floor=floor).log_delta_final >= base.log_delta_final
    assert certified_radius(_cert(eta=eta), 2 * g, 2 * g, c0=c0, monotony_floor=floor).log_delta_single < base.log_delta_single
    assert certified_radius(_cert(eta=eta), g, g, c0=2 * c0, monotony_floor=floor).log_delta_single < base.log_delta_single
    assert base.K == math.ceil(1.0 / eta**2)


def test_inclusion_audits():
    g0 = stilde_inclusion_audit(make_catalog_field("g0_cubic"), (-1, 1, -1, 1))
    xs = {round(p[0], 9) for p in g0["s_flagged_by_growth"]}
    assert xs == {0.0} and len(g0["s_flagged_by_growth"]) == 21
    assert g0["stilde_flagged"] == [] and g0["violations"] == []
    sep = stilde_inclusion_audit(make_catalog_field("separable", f="power:0.5", g="linear:1"), (-1, 1, -1, 1))
    assert sorted(map(tuple, sep["stilde_flagged"])) == sorted(map(tuple, sep["s_flagged_by_growth"]))
    assert len(sep["stilde_flagged"]) > 0
    ident = stilde_inclusion_audit(make_catalog_field("identity"), (-1, 1, -1, 1))
    assert ident["stilde_flagged"] == [] and ident["s_flagged"] == []


def test_inclusion_counterexample_no_violations(bundle):
    a = stilde_inclusion_audit(bundle.G, (-1, 1, -1, 1), scales=(1e-1, 1e-2, 1e-3), grid_step=0.05)
    assert a["violations"] == []
    assert len(a["stilde_flagged"]) > 0
