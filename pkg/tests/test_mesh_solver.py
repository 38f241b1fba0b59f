import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planar_degen.beltrami import LipschitzMap, zero_map
from planar_degen.duality import dual_field, mollify
from planar_degen.field_core import make_catalog_field
from planar_degen.mesh import GridFunction, build_disc_mesh, interpolate
from planar_degen.solver import (
    SolveOptions,
    SolverError,
    approximation_study,
    assemble_beltrami,
    conjugate_cr,
    dual_residual_cr,
    h1_seminorm_distance,
    l2_error,
    laplace_solve,
    reconstruct_conjugate,
    solve_dirichlet,
    weak_residual,
)

CATALOG = [
    ("identity", {}),
    ("p_laplacian", {"p": 4}),
    ("p_laplacian", {"p": 1.5}),
    ("rotational_gm", {"m": 0.5}),
    ("g0_cubic", {}),
    ("separable", {"f": "power:3", "g": "linear:1"}),
    ("pathological_sin", {}),
    ("counterexample_s6", {}),
]


def cos2(t):
    return np.cos(2 * t)


def test_mesh_invariants():
    d = build_disc_mesh(0.25)
    assert 50 <= len(d.points) <= 200
    assert np.all(d.areas > 0)
    assert d.min_angle_deg() >= 20
    assert np.sum(d.areas) == pytest.approx(np.pi, rel=0.05)
    assert np.allclose(np.linalg.norm(d.points[d.boundary_nodes], axis=1), 1.0)
    # each interior edge shared by two triangles, boundary edges by one
    edges, t2e = d.edges
    counts = np.bincount(t2e.ravel(), minlength=len(edges))
    assert set(np.unique(counts)) == {1, 2}
    assert len(d.boundary_edges) == len(d.boundary_nodes)


def test_mesh_refinement_and_rejects():
    n1, n2 = len(build_disc_mesh(0.25).points), len(build_disc_mesh(0.1).points)
    assert n2 / n1 == pytest.approx((0.25 / 0.1) ** 2, rel=0.25)
    with pytest.raises(ValueError):
        build_disc_mesh(0.6)
    assert build_disc_mesh(0.25).content_hash() == build_disc_mesh(0.25).content_hash()


def test_p1_and_cr_gradients_exact_on_affine(meshes):
    d = meshes(1 / 8)
    u = interpolate(d, lambda x: 2 * x[:, 0] - 3 * x[:, 1] + 1)
    assert np.allclose(u.gradient, [2.0, -3.0])
    edges, _ = d.edges
    mids = d.points[edges].mean(axis=1)
    w = GridFunction(d, 2 * mids[:, 0] - 3 * mids[:, 1], "CR")
    assert np.allclose(w.gradient, [2.0, -3.0])


@pytest.mark.parametrize("kind,params", CATALOG)
def test_affine_reproduction(kind, params, meshes):
    f = make_catalog_field(kind, **params)
    d = meshes(1 / 16)
    u, rep = solve_dirichlet(f, d, lambda t: 0.7 * np.cos(t) - 0.4 * np.sin(t) + 0.2)
    exact = 0.7 * d.points[:, 0] - 0.4 * d.points[:, 1] + 0.2
    assert np.max(np.abs(u.values - exact)) <= 1e-10
    assert rep.residual_norm <= 1e-10


def test_harmonic_rate(meshes):
    I = make_catalog_field("identity")
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        u, _ = solve_dirichlet(I, meshes(h), cos2)
        errs.append(l2_error(u, lambda x: x[:, 0] ** 2 - x[:, 1] ** 2))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.8)


def test_counterexample_h1_decreasing(bundle, meshes):
    bd = lambda t: bundle.u(np.stack([np.cos(t), np.sin(t)], -1))
    dists, lips = [], []
    for h in (1 / 8, 1 / 16, 1 / 32):
        u, rep = solve_dirichlet(bundle.G, meshes(h), bd)
        dists.append(h1_seminorm_distance(u, bundle.grad_u))
        lips.append(rep.lipschitz_estimate)
    assert dists[0] > dists[1] > dists[2]
    assert abs(lips[-1] - bundle.LIP_U) < 0.05


def test_solver_error_carries_history(meshes):
    f = make_catalog_field("p_laplacian", p=4)
    with pytest.raises(SolverError) as ei:
        solve_dirichlet(f, meshes(1 / 8), cos2, SolveOptions(tol=1e-14, max_iter=1, strategy="newton"))
    assert len(ei.value.history) >= 1


def test_strategies_agree(meshes):
    f = mollify(make_catalog_field("p_laplacian", p=4), 0.1)
    d = meshes(1 / 8)
    u1, _ = solve_dirichlet(f, d, cos2, SolveOptions(strategy="newton"))
    u2, _ = solve_dirichlet(f, d, cos2, SolveOptions(strategy="picard", tol=1e-9))
    assert np.max(np.abs(u1.values - u2.values)) < 1e-6


def test_eps_continuation(meshes):
    f = make_catalog_field("p_laplacian", p=4)
    u, rep = solve_dirichlet(f, meshes(1 / 8), cos2, SolveOptions(eps_continuation=(0.1, 0.01), tol=1e-9))
    assert np.max(np.abs(weak_residual(f, u))) <= 1e-9


def test_conjugate_identity(meshes):
    I = make_catalog_field("identity")
    d = meshes(1 / 8)
    u, _ = solve_dirichlet(I, d, np.cos)
    v, defect = reconstruct_conjugate(I, u)
    assert defect < 1e-10
    assert np.allclose(v.values - v.values[d.center_node], d.points[:, 1] - d.points[d.center_node, 1], atol=1e-10)


def test_conjugate_counterexample(bundle, meshes):
    d = meshes(1 / 32)
    bd = lambda t: bundle.u(np.stack([np.cos(t), np.sin(t)], -1))
    u, _ = solve_dirichlet(bundle.G, d, bd)
    v, _ = reconstruct_conjugate(bundle.G, u)
    diff = v.values - bundle.v(d.points)
    assert np.max(np.abs(diff - diff.mean())) < 0.05


def test_cr_dual_residual_matches_primal(meshes):
    f = mollify(make_catalog_field("p_laplacian", p=4), 0.05)
    d = meshes(1 / 16)
    u, rep = solve_dirichlet(f, d, lambda t: np.cos(3 * t))
    v, _ = conjugate_cr(f, u)
    r = dual_residual_cr(dual_field(f), v)
    assert r <= 3 * max(rep.residual_norm, 1e-13)


def test_approximation_identity(meshes):
    res = approximation_study(make_catalog_field("identity"), cos2, [0.2, 0.1, 0.05], meshes(1 / 8))
    assert max(res["h1_increments"]) <= 1e-8
    with pytest.raises(ValueError):
        approximation_study(make_catalog_field("identity"), cos2, [0.05, 0.1], meshes(1 / 8))


def test_approximation_p4(meshes):
    res = approximation_study(make_catalog_field("p_laplacian", p=4), lambda t: np.cos(3 * t), [0.2, 0.1, 0.05], meshes(1 / 16))
    assert res["failure"] is None
    assert res["cauchy_trend"] and res["lipschitz_bounded"]


def test_beltrami_assembly(bundle, meshes):
    d = meshes(1 / 8)
    f, r = assemble_beltrami(zero_map(), interpolate(d, lambda x: x[:, 0]), interpolate(d, lambda x: x[:, 1]))
    assert np.allclose(f, 2 * (d.points[:, 0] + 1j * d.points[:, 1])) and r < 1e-13
    res = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        dd = meshes(h)
        _, r = assemble_beltrami(bundle.H, interpolate(dd, bundle.u), interpolate(dd, bundle.v))
        res.append(r)
    assert res[0] > res[1] > res[2]


def test_beltrami_assembly_contraction(meshes):
    # linear strict contraction H: solve the primal, rebuild v, residual at discretization level
    from planar_degen.beltrami import minty_backward

    H = LipschitzMap(lambda z: 0.3 * z + 0.2j * np.conj(z))
    G = minty_backward(H).G
    errs = []
    for h in (1 / 8, 1 / 16):
        u, _ = solve_dirichlet(G, meshes(h), cos2)
        v, _ = reconstruct_conjugate(G, u)
        errs.append(assemble_beltrami(H, u, v)[1])
    assert errs[1] < errs[0] < 0.5


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_affine_property(a, b, c):
    d = build_disc_mesh(0.25)
    u = laplace_solve(d, lambda t: a * np.cos(t) + b * np.sin(t) + c)
    assert np.allclose(u.gradient, [a, b], atol=1e-10)
    assert h1_seminorm_distance(u, lambda x: np.tile([a, b], (len(x), 1))) < 1e-10
