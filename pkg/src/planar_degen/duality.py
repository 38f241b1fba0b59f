"""Inversion of monotone fields and the derived fields: dual, modified at
infinity, mollified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field_core import FieldSpec, MonotoneField, fd_jacobian, rot

__all__ = [
    "InversionResult",
    "InversionError",
    "CutoffSpec",
    "MollifierSpec",
    "invert_field",
    "invert_batch",
    "dual_field",
    "modify_at_infinity",
    "mollify",
    "apply_chain",
    "smoothstep5",
]


class InversionError(RuntimeError):
    """Raised when monotone inversion does not reach tolerance."""

    def __init__(self, message, best_residual, targets=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = float(best_residual)
        self.targets = targets


@dataclass(frozen=True)
class InversionResult:
    preimage: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True)
class CutoffSpec:
    M: float
    c: float
    L: float
    sup_G: float


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float
    kernel_order: int = 8


def _solve2(a, b):
    """Solve batched 2x2 systems a x = b in closed form."""
    det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    x0 = (a[:, 1, 1] * b[:, 0] - a[:, 0, 1] * b[:, 1]) / det
    x1 = (a[:, 0, 0] * b[:, 1] - a[:, 1, 0] * b[:, 0]) / det
    return np.stack([x0, x1], axis=-1)


def _field_jac(field, x, gx):
    if getattr(field, "jacobian", None) is not None:
        return np.asarray(field.jacobian(x), dtype=float)
    return fd_jacobian(field, x, base_values=gx)


def _lm(field, y, x, tol, max_iter):
    """Levenberg-Marquardt with backtracking, vectorized over targets.

    Returns (x, residual, iterations, converged-mask).
    """
    n = len(y)
    gx = field(x)
    r = gx - y
    res = np.linalg.norm(r, axis=1)
    mu = np.zeros(n)
    iters = np.zeros(n, dtype=int)
    stalled = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero((res > tol) & ~stalled)
        if act.size == 0:
            break
        iters[act] += 1
        xa, ra = x[act], r[act]
        J = _field_jac(field, xa, gx[act])
        if not np.all(np.isfinite(J)):
            bad = ~np.all(np.isfinite(J), axis=(1, 2))
            J[bad] = np.eye(2)
        JtJ = np.einsum("nki,nkj->nij", J, J)
        Jtr = np.einsum("nki,nk->ni", J, ra)
        scale = np.trace(JtJ, axis1=1, axis2=2) + 1e-300
        A = JtJ + (mu[act] * scale)[:, None, None] * np.eye(2)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = -_solve2(A, Jtr)
            # pure Newton when the LM damping is off: same direction, better conditioned
            newton = -_solve2(J, ra)
        use_newton = (mu[act] == 0) & np.all(np.isfinite(newton), axis=1)
        d = np.where(use_newton[:, None], newton, d)
        d = np.where(np.all(np.isfinite(d), axis=1)[:, None], d, -ra)
        accepted = np.zeros(act.size, dtype=bool)
        t = 1.0
        for _ls in range(12):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            xt = xa[todo] + t * d[todo]
            with np.errstate(all="ignore"):
                gt = field.fn(xt)
            rt = gt - y[act[todo]]
            rest = np.linalg.norm(rt, axis=1)
            ok = np.isfinite(rest) & (rest < res[act[todo]])
            idx = act[todo[ok]]
            x[idx], gx[idx], r[idx], res[idx] = xt[ok], gt[ok], rt[ok], rest[ok]
            accepted[todo[ok]] = True
            t *= 0.5
        acc_idx = act[accepted]
        mu[acc_idx] = np.where(mu[acc_idx] < 1e-10, 0.0, mu[acc_idx] * 0.1)
        rej = act[~accepted]
        mu[rej] = np.maximum(mu[rej] * 100.0, 1e-8)
        stalled[rej[mu[rej] > 1e8]] = True
    return x, res, iters, res <= tol


def _grid_scan(field, y, radius, n=61):
    """Best grid point per target over [-radius, radius]^2."""
    g = np.linspace(-radius, radius, n)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = field(pts)
    best = np.empty_like(y)
    for start in range(0, len(y), 256):
        yy = y[start : start + 256]
        dist = np.linalg.norm(vals[None, :, :] - yy[:, None, :], axis=-1)
        best[start : start + 256] = pts[np.argmin(dist, axis=1)]
    return best


def invert_batch(field, targets, tol=1e-12, x0=None, max_iter=80, box_radius=None, raise_on_fail=True):
    """Preimages of many targets; returns (preimages, residuals, iterations).

    Starts from ``x0`` (default: the targets themselves), runs damped
    Newton/Levenberg-Marquardt and restarts failures from a grid scan over
    ``[-box_radius, box_radius]^2``.
    """
    y = np.asarray(targets, dtype=float).reshape(-1, 2)
    if not tol > 0:
        raise ValueError("tol must be positive")
    inverse = field.meta.get("inverse")
    if inverse is not None:
        x = np.asarray(inverse(y), dtype=float)
        res = np.linalg.norm(field.fn(x) - y, axis=1)
        if np.all(res <= tol):
            return x, res, np.zeros(len(y), dtype=int)
        x0 = x
    if x0 is None and field.meta.get("inverse_hint") is not None:
        x0 = field.meta["inverse_hint"](y)
    x = (y.copy() if x0 is None else np.array(x0, dtype=float).reshape(-1, 2))
    x, res, iters, ok = _lm(field, y, x, tol, max_iter)
    if not np.all(ok):
        bad = np.flatnonzero(~ok)
        R = box_radius if box_radius is not None else max(4.0, 2.0 * float(np.max(np.abs(y[bad]))))
        xs = _grid_scan(field, y[bad], R)
        xb, rb, ib, okb = _lm(field, y[bad], xs, tol, 3 * max_iter)
        improve = rb < res[bad]
        x[bad[improve]], res[bad[improve]] = xb[improve], rb[improve]
        iters[bad] += ib
        ok[bad] = okb | ok[bad]
    if raise_on_fail and not np.all(ok):
        worst = float(np.max(res))
        raise InversionError(
            f"inversion of {field.label} failed at {int(np.sum(~ok))} targets", worst, y[~ok]
        )
    return x, res, iters


def invert_field(field, target, tol=1e-12, box_radius=None) -> InversionResult:
    """Solve G(xi) = target.

    >>> from .field_core import make_catalog_field
    >>> r = invert_field(make_catalog_field("p_laplacian", p=4), [8.0, 0.0])
    >>> np.round(r.preimage, 12)
    array([2., 0.])
    """
    x, res, it = invert_batch(field, np.asarray(target, dtype=float)[None], tol, box_radius=box_radius)
    return InversionResult(x[0], float(res[0]), int(it[0]))


# ---------------------------------------------------------------------------
# derived fields
# ---------------------------------------------------------------------------


def _derived(spec, fn, base, note, jacobian=None, meta=None, is_gradient=False, potential=None):
    return MonotoneField(
        spec,
        fn,
        is_gradient=is_gradient,
        smoothness_note=note,
        jacobian=jacobian,
        potential=potential,
        meta=dict(meta or {}, base=base),
    )


def _chain_spec(base, name, **kw):
    bs = base.spec
    if bs.kind == "composite":
        return FieldSpec("composite", {"base": bs.params["base"], "chain": tuple(bs.params["chain"]) + ((name, kw),)})
    return FieldSpec("composite", {"base": bs, "chain": ((name, kw),)})


def dual_field(field: MonotoneField, tol=1e-13) -> MonotoneField:
    """G*(xi) = i G^{-1}(-i xi), evaluated through monotone inversion."""

    def fn(x):
        pre, _, _ = invert_batch(field, -rot(x), tol=tol)
        return rot(pre)

    def inverse(y):
        # G*(xi) = y  <=>  xi = i G(-i y)
        return rot(field.fn(-rot(y)))

    jac = None
    if field.jacobian is not None:

        def jac(x):
            pre, _, _ = invert_batch(field, -rot(x), tol=tol)
            Jinv = np.linalg.inv(field.jacobian(pre))
            R = np.array([[0.0, -1.0], [1.0, 0.0]])
            return -R @ Jinv @ R

    return _derived(
        _chain_spec(field, "dual"),
        fn,
        field,
        f"dual of {field.label}",
        jacobian=jac,
        meta={"dual": True, "inverse": inverse},
    )


def smoothstep5(t):
    """Quintic smoothstep on [0, 1]; max slope 15/8."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _dsmoothstep5(t):
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc**2 * (1.0 - tc) ** 2, 0.0)


def _sup_norm_on_disc(field, radius, n_r=160, n_t=192):
    r = radius * np.linspace(0.0, 1.0, n_r)
    t = np.linspace(0.0, 2 * np.pi, n_t, endpoint=False)
    R, T = np.meshgrid(r, t, indexing="ij")
    pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return float(np.max(np.linalg.norm(field(pts), axis=1)))


def modify_at_infinity(field: MonotoneField, M: float):
    """G~ = eta G + grad F with F = c (|x| - M)_+^2, equal to G on B_M.

    eta is 1 on B_{2M}, 0 outside B_{4M}; the quintic profile in
    ``(|x| - 2M)/(2M)`` has slope at most 15/8 / (2M) < 1/M.
    """
    M = float(M)
    if not M > 0:
        raise ValueError("M must be positive")
    sup_g = _sup_norm_on_disc(field, 4.0 * M)
    c = 2.0 * sup_g / M
    L = 2.0 * c + 2.0 * c * M + sup_g
    cut = CutoffSpec(M=M, c=c, L=L, sup_G=sup_g)

    def eta_of(r):
        return 1.0 - smoothstep5((r - 2.0 * M) / (2.0 * M))

    def fn(x):
        r = np.linalg.norm(x, axis=1)
        out = np.zeros_like(x)
        near = r < 4.0 * M
        if np.any(near):
            out[near] = eta_of(r[near])[:, None] * field.fn(x[near])
        far = r > M
        if np.any(far):
            out[far] += (2.0 * c * (r[far] - M) / r[far])[:, None] * x[far]
        return out

    jac = None
    if field.jacobian is not None:

        def jac(x):
            r = np.linalg.norm(x, axis=1)
            out = np.zeros(x.shape + (2,))
            near = r < 4.0 * M
            if np.any(near):
                xn, rn = x[near], r[near]
                eta = eta_of(rn)
                deta = -_dsmoothstep5((rn - 2.0 * M) / (2.0 * M)) / (2.0 * M)
                safe = np.where(rn > 0, rn, 1.0)
                grad_eta = (deta / safe)[:, None] * xn
                out[near] = eta[:, None, None] * field.jacobian(xn) + np.einsum(
                    "ni,nj->nij", field.fn(xn), grad_eta
                )
            far = r > M
            if np.any(far):
                xf, rf = x[far], r[far]
                u = xf / rf[:, None]
                out[far] += 2.0 * c * (
                    ((1.0 - M / rf)[:, None, None]) * np.eye(2) + (M / rf)[:, None, None] * np.einsum("ni,nj->nij", u, u)
                )
            return out

    new = _derived(
        _chain_spec(field, "modify", M=M),
        fn,
        field,
        f"{field.label} modified outside B_{M:g}",
        jacobian=jac,
        meta={"cutoff": cut},
    )
    return new, cut


def _bump(y2):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(y2 < 1.0, np.exp(-1.0 / (1.0 - np.minimum(y2, 1.0 - 1e-300))), 0.0)


def mollifier_nodes(order=8):
    """Tensor Gauss-Legendre nodes in [-1,1]^2 weighted by the unit-mass bump."""
    t, w = np.polynomial.legendre.leggauss(int(order))
    Y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    W = np.outer(w, w).ravel() * _bump(np.sum(Y * Y, axis=1))
    keep = W > 0
    Y, W = Y[keep], W[keep]
    return Y, W / W.sum()


def _shifted_inverse(field, eps):
    """Preimages under the cheap unmollified G + eps xi, a starting guess for G_eps."""
    base = _derived(
        _chain_spec(field, "shift", eps=eps),
        lambda x: field.fn(x) + eps * x,
        field,
        "starting-guess helper",
        jacobian=(lambda x: np.asarray(field.jacobian(x)) + eps * np.eye(2)) if field.jacobian is not None else None,
    )

    def hint(y):
        x, _, _ = invert_batch(base, y, tol=1e-10, raise_on_fail=False)
        return x

    return hint


def mollify(field: MonotoneField, spec: MollifierSpec | float) -> MonotoneField:
    """G_eps = G * rho_eps + eps xi with a quadrature-discretized bump."""
    if not isinstance(spec, MollifierSpec):
        spec = MollifierSpec(float(spec))
    eps = float(spec.epsilon)
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    Y, W = mollifier_nodes(spec.kernel_order)
    shifts = eps * Y

    def fn(x):
        pts = (x[:, None, :] - shifts[None, :, :]).reshape(-1, 2)
        vals = field.fn(pts).reshape(len(x), len(W), 2)
        return np.matmul(W, vals) + eps * x

    jac = None
    if field.jacobian is not None:

        def jac(x):
            pts = (x[:, None, :] - shifts[None, :, :]).reshape(-1, 2)
            J = np.asarray(field.jacobian(pts)).reshape(len(x), len(W), 4)
            return (np.matmul(W, J) + eps * np.eye(2).ravel()).reshape(len(x), 2, 2)

    potential = None
    if field.potential is not None:

        def potential(x):
            x = np.asarray(x, dtype=float)
            sh = x.shape[:-1]
            xx = x.reshape(-1, 2)
            pts = (xx[:, None, :] - shifts[None, :, :]).reshape(-1, 2)
            vals = field.potential(pts).reshape(len(xx), len(W))
            return (vals @ W + 0.5 * eps * np.sum(xx * xx, axis=1)).reshape(sh)

    return _derived(
        _chain_spec(field, "mollify", eps=eps, kernel_order=int(spec.kernel_order)),
        fn,
        field,
        "smooth, strongly monotone",
        jacobian=jac,
        meta={"mollifier": spec, "inverse_hint": _shifted_inverse(field, eps)},
        is_gradient=field.is_gradient,
        potential=potential,
    )


def apply_chain(field: MonotoneField, chain) -> MonotoneField:
    """Apply ``[(name, params), ...]`` with names modify, mollify, dual."""
    out = field
    for name, kw in chain:
        kw = dict(kw)
        if name == "modify":
            out, _ = modify_at_infinity(out, kw["M"])
        elif name == "mollify":
            out = mollify(out, MollifierSpec(float(kw["eps"]), int(kw.get("kernel_order", 8))))
        elif name == "dual":
            out = dual_field(out)
        else:
            raise ValueError(f"unknown transform {name!r}")
    return out
