"""P1 finite elements for div G(grad u) = 0 on the unit disc, conjugate
reconstruction, the mollification study and Beltrami assembly."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve

from .duality import MollifierSpec, mollify
from .field_core import MonotoneField, fd_jacobian
from .mesh import DiscDomain, GridFunction

__all__ = [
    "SolveReport",
    "SolverError",
    "SolveOptions",
    "solve_dirichlet",
    "weak_residual",
    "laplace_solve",
    "reconstruct_conjugate",
    "conjugate_cr",
    "dual_residual_cr",
    "dual_residual_p1",
    "approximation_study",
    "assemble_beltrami",
    "h1_seminorm_distance",
    "l2_error",
]


class SolverError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass
class SolveOptions:
    tol: float = 1e-10
    max_iter: int = 60
    strategy: str = "auto"  # auto | newton | picard | energy_descent
    eps_continuation: tuple = ()  # mollification levels, coarse to fine
    picard_iter: int = 2000
    verbose: bool = False


@dataclass
class SolveReport:
    residual_norm: float
    iterations: int
    strategy: str
    lipschitz_estimate: float
    history: list = dc_field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "strategy": self.strategy,
            "lipschitz_estimate": self.lipschitz_estimate,
            "history": [float(h) for h in self.history],
        }


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _cell_grads(dom, u):
    return np.einsum("ta,tak->tk", u[dom.tris], dom.grads)


def _assemble_vec(dom, flux):
    """R_i = sum_T area <flux_T, grad phi_i>."""
    loc = dom.areas[:, None] * np.einsum("tk,tak->ta", flux, dom.grads)
    R = np.zeros(len(dom.points))
    np.add.at(R, dom.tris.ravel(), loc.ravel())
    return R


def _assemble_mat(dom, J=None):
    """K_ij = sum_T area grad phi_i^T J_T grad phi_j (J = identity when None)."""
    g = dom.grads
    if J is None:
        loc = np.einsum("tak,tbk->tab", g, g)
    else:
        loc = np.einsum("tak,tkl,tbl->tab", g, J, g)
    loc *= dom.areas[:, None, None]
    rows = np.repeat(dom.tris, 3, axis=1).ravel()
    cols = np.tile(dom.tris, (1, 3)).ravel()
    n = len(dom.points)
    return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


def weak_residual(field, u: GridFunction):
    """Interior entries of the discrete weak residual."""
    dom = u.domain
    R = _assemble_vec(dom, field(u.gradient))
    return R[dom.interior_nodes]


def _boundary_values(dom, boundary):
    pb = dom.points[dom.boundary_nodes]
    return np.asarray(boundary(np.arctan2(pb[:, 1], pb[:, 0])), dtype=float)


def laplace_solve(dom: DiscDomain, boundary) -> GridFunction:
    """Discrete harmonic extension of the boundary data."""
    K = _assemble_mat(dom)
    u = np.zeros(len(dom.points))
    u[dom.boundary_nodes] = _boundary_values(dom, boundary)
    I = dom.interior_nodes
    rhs = -K[I][:, dom.boundary_nodes] @ u[dom.boundary_nodes]
    u[I] = spsolve(K[I][:, I].tocsc(), rhs)
    return GridFunction(dom, u)


def _jac(field, grads, gvals):
    if field.jacobian is not None:
        J = np.asarray(field.jacobian(grads), dtype=float)
        if np.all(np.isfinite(J)):
            return J
    return fd_jacobian(field, grads, base_values=gvals, step=1e-7)


def _newton(field, dom, u, opts, hist):
    I = dom.interior_nodes
    its = 0
    for its in range(1, opts.max_iter + 1):
        grads = _cell_grads(dom, u)
        gv = field(grads)
        R = _assemble_vec(dom, gv)[I]
        rn = float(np.max(np.abs(R)))
        hist.append(rn)
        if rn <= opts.tol:
            return u, rn, its - 1, True
        J = _jac(field, grads, gv)
        K = _assemble_mat(dom, J)[I][:, I].tocsc()
        try:
            with np.errstate(all="ignore"):
                d = spsolve(K, -R)
        except Exception:  # singular Jacobian
            return u, rn, its, False
        if not np.all(np.isfinite(d)):
            return u, rn, its, False
        r2 = float(np.linalg.norm(R))
        t, accepted = 1.0, False
        for _ in range(30):
            trial = u.copy()
            trial[I] += t * d
            try:
                Rt = _assemble_vec(dom, field(_cell_grads(dom, trial)))[I]
            except Exception:
                t *= 0.5
                continue
            if np.linalg.norm(Rt) < (1.0 - 1e-4 * t) * r2:
                u, accepted = trial, True
                break
            t *= 0.5
        if not accepted:
            return u, rn, its, False
    grads = _cell_grads(dom, u)
    rn = float(np.max(np.abs(_assemble_vec(dom, field(grads))[I])))
    hist.append(rn)
    return u, rn, its, rn <= opts.tol


def _picard(field, dom, u, opts, hist):
    """Preconditioned Richardson u <- u - tau A^{-1} R with adaptive tau."""
    I = dom.interior_nodes
    A = _assemble_mat(dom)[I][:, I].tocsc()
    from scipy.sparse.linalg import splu

    lu = splu(A)
    tau = 1.0
    R = _assemble_vec(dom, field(_cell_grads(dom, u)))[I]
    for its in range(1, opts.picard_iter + 1):
        rn = float(np.max(np.abs(R)))
        hist.append(rn)
        if rn <= opts.tol:
            return u, rn, its - 1, True
        d = lu.solve(R)
        while tau > 1e-8:
            trial = u.copy()
            trial[I] -= tau * d
            Rt = _assemble_vec(dom, field(_cell_grads(dom, trial)))[I]
            if np.linalg.norm(Rt) < np.linalg.norm(R):
                u, R = trial, Rt
                tau = min(2.0 * tau, 1.0)
                break
            tau *= 0.5
        else:
            return u, rn, its, False
    rn = float(np.max(np.abs(R)))
    return u, rn, opts.picard_iter, rn <= opts.tol


def _energy_descent(field, dom, u, opts, hist):
    I = dom.interior_nodes
    base = u.copy()

    def fun(x):
        w = base.copy()
        w[I] = x
        g = _cell_grads(dom, w)
        E = float(np.sum(dom.areas * field.potential(g)))
        R = _assemble_vec(dom, field(g))[I]
        return E, R

    res = minimize(fun, u[I], jac=True, method="L-BFGS-B", options={"maxiter": 5000, "gtol": opts.tol * 1e-2, "ftol": 1e-300})
    u = base.copy()
    u[I] = res.x
    rn = float(np.max(np.abs(_assemble_vec(dom, field(_cell_grads(dom, u)))[I])))
    hist.append(rn)
    return u, rn, int(res.nit), rn <= opts.tol


def solve_dirichlet(field: MonotoneField, domain: DiscDomain, boundary, opts: SolveOptions | None = None, u0=None):
    """Solve the discrete Dirichlet problem; returns ``(GridFunction, SolveReport)``.

    The initial iterate is the discrete harmonic extension, which already
    solves the problem for affine data.  ``auto`` runs Newton, then Picard,
    then (for fields with a potential) energy descent.  With
    ``eps_continuation`` the mollified problems are solved first, each warm
    starting the next, and the raw field last.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    dom = domain
    if u0 is None:
        u = laplace_solve(dom, boundary).values.copy()
    else:
        u = np.array(u0.values if isinstance(u0, GridFunction) else u0, dtype=float)
        u[dom.boundary_nodes] = _boundary_values(dom, boundary)
    hist = []
    total = 0
    for eps in opts.eps_continuation:
        sub = SolveOptions(tol=max(opts.tol, 1e-8), max_iter=opts.max_iter, strategy=opts.strategy)
        g_eps = mollify(field, MollifierSpec(float(eps)))
        gf, rep = solve_dirichlet(g_eps, dom, boundary, sub, u0=u)
        u = gf.values.copy()
        hist.extend(rep.history)
        total += rep.iterations
    ladder = {
        "auto": ["newton", "picard", "energy_descent"],
        "newton": ["newton"],
        "picard": ["picard"],
        "energy_descent": ["energy_descent"],
    }[opts.strategy]
    ok, rn, used = False, np.inf, ladder[0]
    for strat in ladder:
        used = strat
        if strat == "energy_descent" and field.potential is None:
            continue
        fn = {"newton": _newton, "picard": _picard, "energy_descent": _energy_descent}[strat]
        u, rn, its, ok = fn(field, dom, u, opts, hist)
        total += its
        if ok:
            break
    gf = GridFunction(dom, u)
    rep = SolveReport(rn, total, used, gf.lipschitz(), hist, time.perf_counter() - t0)
    if not ok:
        raise SolverError(f"no convergence for {field.label}: residual {rn:.3e}", hist)
    return gf, rep


# ---------------------------------------------------------------------------
# conjugate function
# ---------------------------------------------------------------------------


def reconstruct_conjugate(field: MonotoneField, u: GridFunction):
    """Least-squares P1 conjugate: grad v ~ i G(grad u), pinned at the center node.

    Returns ``(v, curl_defect)`` with the defect the attained L2 mismatch.
    """
    dom = u.domain
    target = field(u.gradient)
    target = np.stack([-target[:, 1], target[:, 0]], axis=-1)
    K = _assemble_mat(dom).tolil()
    b = _assemble_vec(dom, target)
    c = dom.center_node
    K[c, :] = 0.0
    K[c, c] = 1.0
    b[c] = 0.0
    v = spsolve(K.tocsc(), b)
    gv = GridFunction(dom, v)
    defect = float(np.sqrt(np.sum(dom.areas * np.sum((gv.gradient - target) ** 2, axis=1))))
    return gv, defect


def _cr_gradient_operator(dom):
    edges, t2e = dom.edges
    T, E = len(dom.tris), len(edges)
    rows, cols, vals = [], [], []
    for k in range(2):
        for a in range(3):
            rows.append(2 * np.arange(T) + k)
            cols.append(t2e[:, a])
            vals.append(-2.0 * dom.grads[:, a, k])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * T, E))


def conjugate_cr(field: MonotoneField, u: GridFunction):
    """Crouzeix-Raviart conjugate: broken gradient fitted to i G(grad u).

    When ``u`` solves the discrete problem exactly, the piecewise-constant
    flux is exactly a broken CR gradient, so the fit defect is of the size
    of the primal residual.
    """
    dom = u.domain
    target = field(u.gradient)
    target = np.stack([-target[:, 1], target[:, 0]], axis=-1)
    D = _cr_gradient_operator(dom)
    W = sp.diags(np.repeat(dom.areas, 2))
    A = (D.T @ W @ D).tolil()
    b = D.T @ (W @ target.ravel())
    # gauge: the edge midpoint nearest the origin
    edges, _ = dom.edges
    mids = dom.points[edges].mean(axis=1)
    c = int(np.argmin(np.linalg.norm(mids, axis=1)))
    A[c, :] = 0.0
    A[c, c] = 1.0
    b[c] = 0.0
    v = spsolve(A.tocsc(), b)
    gv = GridFunction(dom, v, space="CR")
    defect = float(np.sqrt(np.sum(dom.areas * np.sum((gv.gradient - target) ** 2, axis=1))))
    return gv, defect


def dual_residual_cr(dual: MonotoneField, v: GridFunction):
    """Max over interior edges of |sum_T area <G*(grad v), grad psi_e>|."""
    dom = v.domain
    flux = dual(v.gradient)
    edges, t2e = dom.edges
    loc = -2.0 * dom.areas[:, None] * np.einsum("tk,tak->ta", flux, dom.grads)
    R = np.zeros(len(edges))
    np.add.at(R, t2e.ravel(), loc.ravel())
    mask = np.ones(len(edges), dtype=bool)
    mask[dom.boundary_edges] = False
    return float(np.max(np.abs(R[mask])))


def dual_residual_p1(dual: MonotoneField, v: GridFunction):
    """Same residual for a conforming v, tested with interior hat functions."""
    return float(np.max(np.abs(weak_residual(dual, v))))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def h1_seminorm_distance(u: GridFunction, grad_exact, radius=1.0):
    """L2 norm of grad u_h - grad u over triangles with centroid in B_radius.

    ``grad_exact`` may be a GridFunction or a callable evaluated with a
    7-point quadrature per triangle.
    """
    dom = u.domain
    sel = np.linalg.norm(dom.centroids, axis=1) <= radius
    if isinstance(grad_exact, GridFunction):
        diff = u.gradient - grad_exact.gradient
        return float(np.sqrt(np.sum(dom.areas[sel] * np.sum(diff[sel] ** 2, axis=1))))
    bary, w = _quad7()
    p = dom.points[dom.tris[sel]]
    q = np.einsum("qa,tak->tqk", bary, p)
    g = np.asarray(grad_exact(q.reshape(-1, 2))).reshape(q.shape)
    diff = g - u.gradient[sel][:, None, :]
    return float(np.sqrt(np.sum(dom.areas[sel][:, None] * w[None, :] * np.sum(diff**2, axis=2))))


def l2_error(u: GridFunction, exact):
    dom = u.domain
    bary, w = _quad7()
    p = dom.points[dom.tris]
    q = np.einsum("qa,tak->tqk", bary, p)
    uh = np.einsum("qa,ta->tq", bary, u.values[dom.tris])
    ue = np.asarray(exact(q.reshape(-1, 2))).reshape(uh.shape)
    return float(np.sqrt(np.sum(dom.areas[:, None] * w[None, :] * (uh - ue) ** 2)))


def _quad7():
    # degree-5 Dunavant rule on the reference triangle (barycentric, weights sum to 1)
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    bary = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ]
    )
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    return bary, w


# ---------------------------------------------------------------------------
# approximation study and Beltrami assembly
# ---------------------------------------------------------------------------


def approximation_study(field: MonotoneField, boundary, eps_list, domain: DiscDomain, opts=None):
    """Solve with each mollification level (warm-started) and compare on B_{1/2}."""
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e < 1 for e in eps_list) or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing in (0, 1)")
    opts = opts or SolveOptions(tol=1e-9)
    sols, rows, failed = [], [], None
    u0 = None
    for eps in eps_list:
        try:
            u, rep = solve_dirichlet(mollify(field, MollifierSpec(eps)), domain, boundary, opts, u0=u0)
        except Exception as exc:  # partial report
            failed = {"eps": eps, "error": str(exc)}
            break
        u0 = u
        inner = np.linalg.norm(domain.centroids, axis=1) <= 0.5
        lip = float(np.max(np.linalg.norm(u.gradient[inner], axis=1)))
        rows.append({"eps": eps, "residual": rep.residual_norm, "iterations": rep.iterations, "interior_lipschitz": lip})
        sols.append(u)
    dists = [h1_seminorm_distance(a, b, radius=0.5) for a, b in zip(sols, sols[1:])]
    lips = [r["interior_lipschitz"] for r in rows]
    return {
        "field": field.label,
        "rows": rows,
        "h1_increments": dists,
        "cauchy_trend": bool(len(dists) < 2 or all(b <= a for a, b in zip(dists, dists[1:]))),
        "lipschitz_bounded": bool(len(lips) < 2 or max(lips) <= 2.0 * min(lips) + 1e-12),
        "failure": failed,
        "solutions": sols,
    }


def assemble_beltrami(H, u: GridFunction, v: GridFunction):
    """f = 2 (u + i v) and the L2 norm of f_zbar - H(f_z) over triangles.

    The factor 2 matches the convention where ``u`` solves
    ``div G(grad u) = 0`` with ``G`` from ``H`` (``grad u = f_zbar``-type
    half gradients).
    """
    dom = u.domain
    f = 2.0 * (u.values + 1j * v.values) if u.space == v.space == "P1" else None
    gu, gv = u.gradient, v.gradient
    fx = 2.0 * (gu[:, 0] + 1j * gv[:, 0])
    fy = 2.0 * (gu[:, 1] + 1j * gv[:, 1])
    fz = 0.5 * (fx - 1j * fy)
    fzb = 0.5 * (fx + 1j * fy)
    res = fzb - H(fz)
    resid = float(np.sqrt(np.sum(dom.areas * np.abs(res) ** 2)))
    return f, resid
