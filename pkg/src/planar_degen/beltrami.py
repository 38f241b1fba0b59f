"""Monotone fields as nonlinear Beltrami data.

A strictly monotone ``G`` corresponds to a strictly 1-Lipschitz complex map
``H`` through ``psi = (xi + G)/2`` and ``F = (H + conj z)/2``.  The module
also holds the linear dichotomy and the explicit Lipschitz, non-C^1
solution built from ``H(r e^{it}) = g(r) e^{3it}/3``.

Complex numbers and plane vectors are identified by ``x + iy <-> (x, y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .duality import invert_batch, smoothstep5
from .field_core import FieldSpec, MonotoneField, fd_jacobian, quotients

__all__ = [
    "LipschitzMap",
    "BeltramiQuotient",
    "GammaSummary",
    "LinearBeltramiVerdict",
    "MintyPair",
    "CounterexampleBundle",
    "to_complex",
    "to_plane",
    "zero_map",
    "minty_forward",
    "minty_backward",
    "minty_round_trip",
    "beltrami_quotients",
    "gamma_classify",
    "linear_analyze",
    "build_counterexample",
    "counterexample_stilde_audit",
    "counterexample_audits",
    "lipschitz_audit",
]

CONJ = np.diag([1.0, -1.0])
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def to_complex(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0] + 1j * p[..., 1]


def to_plane(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


@dataclass(frozen=True)
class LipschitzMap:
    """Complex map ``H``; ``fn`` acts on complex arrays of any shape.

    ``jacobian`` (optional) takes ``(n, 2)`` plane points and returns the
    real ``(n, 2, 2)`` Jacobian.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str = "catalog"
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    meta: dict = dc_field(default_factory=dict)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.fn(z.ravel()), dtype=complex).reshape(z.shape)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("Lipschitz map produced non-finite values")
        return out

    def plane(self, x):
        return to_plane(self(to_complex(x)))

    def jac(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return fd_jacobian(self.plane, x)


def zero_map():
    return LipschitzMap(lambda z: np.zeros_like(z), "catalog", lambda x: np.zeros((len(x), 2, 2)))


def lipschitz_audit(H, n=10_000, radius=2.0, seed=0):
    """Largest sampled |H(a) - H(b)| / |a - b| over random pairs."""
    rng = np.random.default_rng(seed)
    a = radius * (rng.random(n) * 2 - 1) + 1j * radius * (rng.random(n) * 2 - 1)
    b = a + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * 10.0 ** rng.uniform(-4, 0, n)
    return float(np.max(np.abs(H(a) - H(b)) / np.abs(a - b)))


# ---------------------------------------------------------------------------
# Minty correspondence
# ---------------------------------------------------------------------------


def _plane_field(fn, jac, label):
    return MonotoneField(FieldSpec("composite", {}, label), fn, jacobian=jac)


def minty_forward(field: MonotoneField, tol=1e-13):
    """Return ``(H, phi)`` with ``phi = conj psi`` and ``H(phi(xi)) = (xi - G(xi))/2``.

    ``H`` at an arbitrary point is computed by inverting ``psi``, which is
    strongly monotone with constant 1/2.
    """
    Gj = field.jacobian
    psi = _plane_field(
        lambda x: 0.5 * (x + field.fn(x)),
        (lambda x: 0.5 * (np.eye(2) + Gj(x))) if Gj is not None else None,
        f"psi[{field.label}]",
    )

    def phi(xi):
        return to_complex(psi(np.asarray(xi, dtype=float))).conj()

    def H_fn(z):
        target = to_plane(np.conj(z))
        xi, _, _ = invert_batch(psi, target, tol=tol, x0=target)
        return to_complex(0.5 * (xi - field.fn(xi)))

    jac = None
    if Gj is not None:

        def jac(x):
            xi, _, _ = invert_batch(psi, x @ CONJ, tol=tol, x0=x @ CONJ)
            Jk = 0.5 * (np.eye(2) - Gj(xi))
            Jpsi = 0.5 * (np.eye(2) + Gj(xi))
            return Jk @ np.linalg.inv(Jpsi) @ CONJ

    H = LipschitzMap(H_fn, "minty_forward", jac, meta={"field": field.label})
    return H, phi


@dataclass(frozen=True)
class MintyPair:
    H: LipschitzMap
    G: MonotoneField
    G_star: MonotoneField
    F: Callable
    F_star: Callable


def minty_backward(H: LipschitzMap, tol=1e-13, label="minty_backward") -> MintyPair:
    """Fields ``G = -i F_* o F^{-1}`` and ``G* = i F o F_*^{-1}``.

    ``F(z) = w`` is solved as ``P(z) = conj w`` with ``P = (z + conj H)/2`` and
    ``F_*(z) = w`` as ``Q(z) = i conj w`` with ``Q = (z - conj H)/2``; both
    ``P`` and ``Q`` are strictly monotone when ``H`` is strictly 1-Lipschitz.
    """

    def F(z):
        z = np.asarray(z, dtype=complex)
        return 0.5 * (H(z) + np.conj(z))

    def F_star(z):
        z = np.asarray(z, dtype=complex)
        return (H(z) - np.conj(z)) / 2j

    def Hc(x):  # conj H on plane points
        return H.plane(x) @ CONJ

    JH = H.jacobian
    P = _plane_field(
        lambda x: 0.5 * (x + Hc(x)),
        (lambda x: 0.5 * (np.eye(2) + CONJ @ JH(x))) if JH is not None else None,
        "P",
    )
    Q = _plane_field(
        lambda x: 0.5 * (x - Hc(x)),
        (lambda x: 0.5 * (np.eye(2) - CONJ @ JH(x))) if JH is not None else None,
        "Q",
    )

    def F_inv(w):
        t = w @ CONJ
        z, _, _ = invert_batch(P, t, tol=tol, x0=2.0 * t)
        return z

    def Fs_inv(w):
        t = (w @ CONJ) @ ROT.T  # i * conj w
        z, _, _ = invert_batch(Q, t, tol=tol, x0=2.0 * t)
        return z

    def G_fn(w):
        z = F_inv(w)
        return 0.5 * (z @ CONJ - H.plane(z))

    def Gs_fn(w):
        z = Fs_inv(w)
        return (0.5 * (H.plane(z) + z @ CONJ)) @ ROT.T

    def G_inverse(y):
        # G(F(z)) = (conj z - H(z))/2 = y  <=>  Q(z) = conj y
        z, _, _ = invert_batch(Q, y @ CONJ, tol=tol, x0=2.0 * (y @ CONJ))
        return to_plane(F(to_complex(z)))

    def Gs_inverse(y):
        # G*(F_*(z)) = i (H + conj z)/2 = y  <=>  F(z) = -i y  <=>  P(z) = i conj y
        t = (y @ CONJ) @ ROT.T
        z, _, _ = invert_batch(P, t, tol=tol, x0=2.0 * t)
        return to_plane(F_star(to_complex(z)))

    G_jac = Gs_jac = None
    if JH is not None:

        def G_jac(w):
            z = F_inv(w)
            Jk = 0.5 * (CONJ - JH(z))
            return Jk @ np.linalg.inv(0.5 * (np.eye(2) + CONJ @ JH(z))) @ CONJ

        def Gs_jac(w):
            z = Fs_inv(w)
            Jk = ROT @ (0.5 * (JH(z) + CONJ))
            return Jk @ np.linalg.inv(0.5 * (np.eye(2) - CONJ @ JH(z))) @ (ROT @ CONJ)

    G = MonotoneField(
        FieldSpec("composite", {}, label),
        G_fn,
        is_gradient=False,
        smoothness_note="defined through inversion of F",
        jacobian=G_jac,
        meta={"inverse": G_inverse, "H": H},
    )
    G_star = MonotoneField(
        FieldSpec("composite", {}, label + "*"),
        Gs_fn,
        is_gradient=False,
        smoothness_note="defined through inversion of F_*",
        jacobian=Gs_jac,
        meta={"inverse": Gs_inverse, "H": H, "dual": True},
    )
    return MintyPair(H, G, G_star, F, F_star)


def minty_round_trip(field: MonotoneField, points, tol=1e-13):
    """Rebuild ``field`` through H and back; returns the max error on ``points``.

    With ``H`` from ``psi = (xi + G)/2`` the recovered field is
    ``xi -> G(2 xi)/2``, so the comparison undoes that rescaling.
    """
    H, _ = minty_forward(field, tol=tol)
    back = minty_backward(H, tol=tol).G
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return float(np.max(np.abs(2.0 * back(0.5 * pts) - field(pts))))


# ---------------------------------------------------------------------------
# quotients and Gamma classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BeltramiQuotient:
    base: complex
    offset: complex
    L: complex
    gamma_plus: float
    gamma_minus: float


def beltrami_quotients(H, base, offset):
    """Vectorized ``(L, gamma_plus, gamma_minus)``."""
    base = np.asarray(base, dtype=complex)
    offset = np.asarray(offset, dtype=complex)
    if np.any(offset == 0):
        raise ValueError("offset must be nonzero")
    base, offset = np.broadcast_arrays(base, offset)
    L = (H(base + offset) - H(base)) / np.conj(offset)
    num = 1.0 - np.abs(L) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = np.abs(1.0 + L) ** 2
        dm = np.abs(1.0 - L) ** 2
        gp = np.where(dp < 1e-28, np.inf, num / np.where(dp > 0, dp, 1.0))
        gm = np.where(dm < 1e-28, np.inf, num / np.where(dm > 0, dm, 1.0))
    return L, gp, gm


@dataclass(frozen=True)
class GammaSummary:
    base: complex
    scales: np.ndarray
    gamma_plus_min: np.ndarray
    gamma_minus_min: np.ndarray
    L_at_min: np.ndarray
    verdict_plus: str
    verdict_minus: str

    def to_dict(self):
        return {
            "base": [self.base.real, self.base.imag],
            "scales": self.scales.tolist(),
            "gamma_plus_min": self.gamma_plus_min.tolist(),
            "gamma_minus_min": self.gamma_minus_min.tolist(),
            "verdict_plus": self.verdict_plus,
            "verdict_minus": self.verdict_minus,
        }


def _trend(vals, floor=0.05):
    vals = np.asarray(vals)
    if vals[-1] < floor and vals[-1] < 0.5 * vals[0]:
        return "decreasing_to_zero"
    return "bounded_below"


def gamma_classify(H, base, offset_scales=None, n_dirs=16, directions=None) -> GammaSummary:
    """Scale-resolved minima of both gammas over offset directions.

    ``directions`` (unit complex numbers) overrides the uniform fan.
    """
    if offset_scales is None:
        offset_scales = np.geomspace(1e-1, 1e-5, 5)
    scales = np.asarray(offset_scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("offset scales must be positive")
    if directions is None:
        directions = np.exp(2j * np.pi * np.arange(n_dirs) / n_dirs)
    dirs = np.asarray(directions, dtype=complex)
    base = complex(base)
    off = scales[:, None] * dirs[None, :]
    L, gp, gm = beltrami_quotients(H, np.full(off.shape, base), off)
    ip = np.argmin(gp, axis=1)
    return GammaSummary(
        base,
        scales,
        gp.min(axis=1),
        gm.min(axis=1),
        L[np.arange(len(scales)), ip],
        _trend(gp.min(axis=1)),
        _trend(gm.min(axis=1)),
    )


# ---------------------------------------------------------------------------
# linear equation f_zbar = mu f_z + nu conj(f_z)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearBeltramiVerdict:
    mu: complex
    nu: complex
    forces_constancy: bool
    constant_part: str
    counterexample: Optional[tuple]  # (A, B) with f = A z + B conj z
    branch: str = ""

    def residual(self):
        if self.counterexample is None:
            return 0.0
        A, B = self.counterexample
        return abs(B - self.mu * A - self.nu * np.conj(A))

    def f(self, z):
        A, B = self.counterexample
        z = np.asarray(z, dtype=complex)
        return A * z + B * np.conj(z)


def _affine_from_uv(ux, uy, vx, vy):
    # f = u + i v affine; f_z = (f_x - i f_y)/2, f_zbar = (f_x + i f_y)/2
    fx, fy = ux + 1j * vx, uy + 1j * vy
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def linear_analyze(mu, nu, atol=1e-12) -> LinearBeltramiVerdict:
    """Constancy verdict for the linear equation with |mu| + |nu| = 1.

    Real coefficients follow the real 2x2 system ``a u_x = b v_y``,
    ``c u_y = d v_x``; complex ones use ``f = w z + (mu w + nu conj w) conj z``
    with ``w`` chosen so that neither part is constant.
    """
    mu, nu = complex(mu), complex(nu)
    if abs(abs(mu) + abs(nu) - 1.0) > atol:
        raise ValueError(f"|mu| + |nu| must equal 1, got {abs(mu) + abs(nu)!r}")
    if abs(mu) <= atol and abs(nu - 1) <= atol:
        return LinearBeltramiVerdict(mu, nu, True, "im", None, "nu=+1")
    if abs(mu) <= atol and abs(nu + 1) <= atol:
        return LinearBeltramiVerdict(mu, nu, True, "re", None, "nu=-1")
    if mu.imag == 0 and nu.imag == 0:
        m, n = mu.real, nu.real
        a, b = 1 - m - n, 1 + m + n
        c, d = 1 + m - n, -(1 - m + n)
        if a != 0 and b != 0:
            uv, branch = (b / a, 0.0, 0.0, 1.0), "a,b!=0"
        elif a != 0:  # b == 0, hence d != 0
            uv, branch = ((0.0, 1.0, 0.0, 1.0), "b=0,c=0") if c == 0 else ((0.0, d / c, 1.0, 0.0), "b=0,c!=0")
        elif d != 0:  # a == 0, b == 2
            uv, branch = (0.0, d / c, 1.0, 0.0), "a=0,d!=0"
        else:  # a == 0, d == 0: v_y = 0, u_y = 0
            uv, branch = (1.0, 0.0, 1.0, 0.0), "a=0,d=0"
        A, B = _affine_from_uv(*uv)
        return LinearBeltramiVerdict(mu, nu, False, "none", (A, B), branch)
    for w in (1.0, 1j, 1 + 1j, 1 + 2j, 2 + 1j, 1 - 1j):
        A = complex(w)
        B = mu * A + nu * np.conj(A)
        # gradients of Re f and Im f for f = A z + B conj z
        fx, fy = A + B, 1j * (A - B)
        if min(np.hypot(fx.real, fy.real), np.hypot(fx.imag, fy.imag)) > 1e-8:
            return LinearBeltramiVerdict(mu, nu, False, "none", (A, B), "complex")
    raise RuntimeError("no affine witness found")  # pragma: no cover


# ---------------------------------------------------------------------------
# explicit counterexample
# ---------------------------------------------------------------------------

_CHI_ON, _CHI_OFF = 2.2, 3.0


def _chi(r):
    return 1.0 - smoothstep5((r - _CHI_ON) / (_CHI_OFF - _CHI_ON))


def _dchi(r):
    t = (r - _CHI_ON) / (_CHI_OFF - _CHI_ON)
    inside = (t > 0) & (t < 1)
    tc = np.clip(t, 0, 1)
    return np.where(inside, -30.0 * tc**2 * (1 - tc) ** 2 / (_CHI_OFF - _CHI_ON), 0.0)


def g_profile(r):
    """g(r) = r exp(-(r-1)^2/2) chi(r)."""
    r = np.asarray(r, dtype=float)
    return r * np.exp(-0.5 * (r - 1.0) ** 2) * _chi(r)


def g_over_r(r):
    r = np.asarray(r, dtype=float)
    return np.exp(-0.5 * (r - 1.0) ** 2) * _chi(r)


def g_prime(r):
    r = np.asarray(r, dtype=float)
    e = np.exp(-0.5 * (r - 1.0) ** 2)
    return e * (1.0 - r * (r - 1.0)) * _chi(r) + r * e * _dchi(r)


def _h_s6(z):
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, g_over_r(r) * r * (z / safe) ** 3 / 3.0, 0.0)


def _h_s6_jac(x):
    r = np.linalg.norm(x, axis=1)
    safe = np.where(r > 0, r, 1.0)
    e1 = np.where(r[:, None] > 0, x / safe[:, None], np.array([1.0, 0.0]))
    z1 = e1[:, 0] + 1j * e1[:, 1]
    e3 = to_plane(z1**3)
    ie3 = to_plane(1j * z1**3)
    ie1 = to_plane(1j * z1)
    return (g_prime(r) / 3.0)[:, None, None] * np.einsum("ni,nj->nij", e3, e1) + g_over_r(r)[
        :, None, None
    ] * np.einsum("ni,nj->nij", ie3, ie1)


@dataclass(frozen=True)
class CounterexampleBundle:
    H: LipschitzMap
    pair: MintyPair
    audit: dict

    @property
    def G(self):
        return self.pair.G

    @property
    def F(self):
        return self.pair.F

    g = staticmethod(g_profile)
    g_prime = staticmethod(g_prime)

    @staticmethod
    def f(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        return np.where(r > 0, (2.0 / 3.0) * 1j * z**2 / np.where(r > 0, r, 1.0), 0.0)

    @staticmethod
    def f_z(z):
        # d/dz of (2/3) i z^2 |z|^{-1}: (2/3) i (2 z/|z| - z/(2|z|)) = i z/|z|
        z = np.asarray(z, dtype=complex)
        return 1j * z / np.abs(z)

    @staticmethod
    def f_zbar(z):
        # d/dzbar of (2/3) i z^2 |z|^{-1}: -(1/3) i z^3 / |z|^3
        z = np.asarray(z, dtype=complex)
        return -(1.0 / 3.0) * 1j * (z / np.abs(z)) ** 3

    @staticmethod
    def u(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(r > 0, r, 1.0)
        # -(r/3) sin 2t = -(2/3) x y / r
        return np.where(r > 0, -(2.0 / 3.0) * x[..., 0] * x[..., 1] / safe, 0.0)

    @staticmethod
    def v(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, (x[..., 0] ** 2 - x[..., 1] ** 2) / (3.0 * safe), 0.0)

    @staticmethod
    def grad_u(x):
        """Closed-form gradient of u, equal to F(i e^{it}) on the ray of angle t."""
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(r > 0, r, 1.0)
        X, Y = x[..., 0], x[..., 1]
        gx = -(2.0 / 3.0) * Y**3 / safe**3
        gy = -(2.0 / 3.0) * X**3 / safe**3
        return np.stack([gx, gy], axis=-1)

    @staticmethod
    def det_grad_F_exact(theta):
        return -(1.0 / 3.0) * np.sin(2.0 * np.asarray(theta)) ** 2

    @staticmethod
    def sym_grad_G_exact(theta):
        """Largest eigenvalue 2/sin^2(2t) of the symmetric gradient at F(e^{it})."""
        return 2.0 / np.sin(2.0 * np.asarray(theta)) ** 2

    # Lipschitz constant of u: |grad u| = (2/3) sqrt(x^6 + y^6)/r^3, max at the axes
    LIP_U = 2.0 / 3.0


def _audit_profile(n=100_000):
    r = np.linspace(0.0, 4.0, n)
    r = r[np.abs(r - 1.0) > 1e-9]
    ratio = g_over_r(r)
    gp = np.abs(g_prime(r)) / 3.0
    return {
        "g(1)": float(g_profile(1.0)),
        "g'(1)": float(g_prime(1.0)),
        "max |g|/r off 1": float(np.max(ratio)),
        "max |g'|/3": float(np.max(gp)),
        "g = 0 beyond 3": bool(np.all(g_profile(np.linspace(3.0, 10.0, 1000)) == 0)),
    }


def build_counterexample(audit_points=100_000) -> CounterexampleBundle:
    """Explicit H, its fields, and the closed-form solution; audits g first."""
    audit = _audit_profile(audit_points)
    ok = (
        audit["g(1)"] == 1.0
        and audit["max |g|/r off 1"] < 1.0
        and audit["max |g'|/3"] < 1.0
        and abs(audit["g'(1)"] - 1.0) < 1e-14
        and audit["g = 0 beyond 3"]
    )
    if not ok:
        raise RuntimeError(f"profile audit failed: {audit}")
    H = LipschitzMap(_h_s6, "explicit_s6", _h_s6_jac)
    pair = minty_backward(H, label="counterexample_s6")
    G = pair.G
    G = MonotoneField(FieldSpec("counterexample_s6"), G.fn, False, "Lipschitz, degenerate and singular on F(S^1)", G.jacobian, None, G.meta)
    pair = MintyPair(H, G, pair.G_star, pair.F, pair.F_star)
    return CounterexampleBundle(H, pair, audit)


def counterexample_stilde_audit(bundle: CounterexampleBundle, thetas=None, scale=1e-5, n_dirs=32):
    """Symmetric-part quotients of G near F(e^{it}).

    For each angle, the largest lower quotient over a fan of offsets at
    ``F(e^{it})`` is compared with ``2/sin^2(2t)``.  The growth audit
    checks that the samples increase as ``t`` decreases to 0.
    """
    if thetas is None:
        thetas = np.array([np.pi / 4, np.pi / 3, np.pi / 6, np.pi / 8, np.pi / 16, np.pi / 32, np.pi / 64])
    thetas = np.asarray(thetas, dtype=float)
    base = to_plane(bundle.F(np.exp(1j * thetas)))
    ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
    rows = []
    for k, t in enumerate(thetas):
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        # include the predicted eigen-direction i e^{it}
        dirs = np.vstack([dirs, [[-np.sin(t), np.cos(t)]]])
        ql, _ = quotients(bundle.G, np.broadcast_to(base[k], dirs.shape), scale * dirs)
        sample = float(np.max(ql))
        exact = float(bundle.sym_grad_G_exact(t))
        rows.append({"theta": float(t), "max_q_lower": sample, "closed_form": exact, "rel_err": abs(sample - exact) / exact})
    grid = np.array([np.pi / 2 ** k for k in range(3, 8)])
    base_g = to_plane(bundle.F(np.exp(1j * grid)))
    growth = []
    for k, t in enumerate(grid):
        d = np.array([[-np.sin(t), np.cos(t)]])
        ql, _ = quotients(bundle.G, base_g[k : k + 1], scale * d)
        growth.append(float(ql[0]))
    return {
        "rows": rows,
        "growth_thetas": grid.tolist(),
        "growth_samples": growth,
        "growth_monotone": bool(np.all(np.diff(growth) > 0)),
    }


def _fd_det(F, z, step=1e-5):
    def Fp(x):
        return to_plane(F(to_complex(x)))

    x = to_plane(z)
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    dx = (Fp(x + ex) - Fp(x - ex)) / (2 * step)
    dy = (Fp(x + ey) - Fp(x - ey)) / (2 * step)
    return dx[..., 0] * dy[..., 1] - dx[..., 1] * dy[..., 0]


def counterexample_audits(bundle: CounterexampleBundle, gamma_scale=1e-4, n_circle=360, n_det=36):
    """Every invariant of the counterexample as ``{name, anchor, value, tol, passed}`` rows."""
    rows = []

    def add(name, anchor, value, tol, passed):
        rows.append({"name": name, "anchor": anchor, "value": value, "tol": tol, "passed": bool(passed)})

    a = bundle.audit
    add("g(1) = 1", "profile normalisation", a["g(1)"], 0.0, a["g(1)"] == 1.0)
    add("g constraints", "max |g|/r, max |g'|/3 below 1", [a["max |g|/r off 1"], a["max |g'|/3"]], 1.0,
        a["max |g|/r off 1"] < 1.0 and a["max |g'|/3"] < 1.0)
    th = 2 * np.pi * np.arange(n_circle) / n_circle
    err = float(np.max(np.abs(np.abs(bundle.f_z(np.exp(1j * th))) - 1.0)))
    add("|f_z|=1", "f_z unimodular on the circle", err, 1e-12, err <= 1e-12)
    th = 2 * np.pi * (np.arange(n_det) + 0.5) / n_det
    det_err = float(np.max(np.abs(_fd_det(bundle.F, np.exp(1j * th)) - bundle.det_grad_F_exact(th))))
    add("det grad F", "det = -(1/3) sin^2 2t on the circle", det_err, 1e-8, det_err <= 1e-8)
    # circle points away from the multiples of pi/4
    th = np.pi * np.arange(1, 24) / 12
    th = th[np.abs(np.sin(4 * th)) > 1e-9]
    worst = 0.0
    for t in th:
        s = gamma_classify(bundle.H, np.exp(1j * t), offset_scales=[gamma_scale])
        worst = max(worst, float(s.gamma_plus_min[0]), float(s.gamma_minus_min[0]))
    add("Gamma on circle", "both gammas degenerate on the unit circle", worst, 0.05, worst < 0.05)
    inner = [0.0] + [0.02 * np.exp(1j * t) for t in np.pi * np.arange(8) / 4]
    best = np.inf
    for b in inner:
        s = gamma_classify(bundle.H, b, offset_scales=[gamma_scale])
        best = min(best, float(s.gamma_plus_min[0]), float(s.gamma_minus_min[0]))
    add("Gamma interior", "gammas bounded below near the origin", best, 0.2, best > 0.2)
    st = counterexample_stilde_audit(bundle)
    r3 = next(r for r in st["rows"] if abs(r["theta"] - np.pi / 3) < 1e-12)
    add("symmetric quotient at F(e^{i pi/3})", "largest eigenvalue 8/3", r3["max_q_lower"], 0.1, r3["rel_err"] <= 0.1)
    add("symmetric quotient growth", "2/sin^2 2t grows as t -> 0", st["growth_samples"], None, st["growth_monotone"])
    return rows
