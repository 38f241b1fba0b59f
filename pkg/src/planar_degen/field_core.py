"""Planar monotone vector fields, the field catalog and ellipticity quotients.

Points of the plane are numpy arrays whose last axis has length 2.  Every
field evaluates arrays of shape ``(..., 2)`` and returns the same shape, so
sampling operations are plain vectorized maps.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Optional

import numpy as np
from scipy import special

__all__ = [
    "FieldSpec",
    "MonotoneField",
    "QuotientSample",
    "FieldError",
    "rot",
    "make_catalog_field",
    "monotonicity_gap",
    "quotient_sample",
    "quotients",
    "modulus_of_monotony",
    "pathological_primitive",
    "CATALOG_KINDS",
]

# |D^zeta G| below this maps the inverse-type quotient to +inf.
UNDERFLOW_GUARD = 1e-14

CATALOG_KINDS = (
    "identity",
    "p_laplacian",
    "rotational_gm",
    "g0_cubic",
    "separable",
    "pathological_sin",
    "counterexample_s6",
    "composite",
)


class FieldError(ValueError):
    """Invalid field parameters or a non-finite evaluation."""


def rot(v):
    """Counterclockwise rotation by pi/2, (x, y) -> (-y, x)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _as_points(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 2:
        raise ValueError(f"expected trailing axis of length 2, got shape {xi.shape}")
    return xi


@dataclass(frozen=True)
class FieldSpec:
    """Catalog description of a field.

    ``params`` holds kind-specific values: ``p`` for ``p_laplacian``, ``m``
    for ``rotational_gm``, component strings ``f`` and ``g`` for
    ``separable`` (``"linear:a"``, ``"power:q"`` or ``"pathological"``),
    and ``base`` plus ``chain`` for ``composite``, where ``chain`` is a tuple
    of ``(transform, {param: value})`` pairs applied left to right.
    """

    kind: str
    params: dict = dc_field(default_factory=dict)
    label: str = ""

    def describe(self) -> str:
        if self.label:
            return self.label
        if self.kind == "composite":
            out = self.params["base"].describe()
            for name, kw in self.params.get("chain", ()):
                args = ", ".join(f"{k}={v}" for k, v in sorted(kw.items()))
                out = f"{name}({out}{', ' if args else ''}{args})"
            return out
        if not self.params:
            return self.kind
        args = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({args})"

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.kind == "composite":
            params["base"] = self.params["base"].to_dict()
            params["chain"] = [[n, dict(kw)] for n, kw in self.params.get("chain", ())]
        return {"kind": self.kind, "params": params, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        params = dict(d.get("params", {}))
        if d["kind"] == "composite":
            params["base"] = cls.from_dict(params["base"])
            params["chain"] = tuple((n, dict(kw)) for n, kw in params.get("chain", ()))
        return cls(d["kind"], params, d.get("label", ""))


@dataclass(frozen=True)
class MonotoneField:
    """An evaluatable strictly monotone planar field.

    ``fn`` maps an ``(n, 2)`` array to an ``(n, 2)`` array.  ``jacobian``,
    when present, maps ``(n, 2)`` points to ``(n, 2, 2)`` matrices with
    ``J[k, i, j] = d G_i / d xi_j``.  ``potential`` is set for catalog
    gradient fields (``G = grad potential``).
    """

    spec: FieldSpec
    fn: Callable[[np.ndarray], np.ndarray]
    is_gradient: bool = False
    smoothness_note: str = ""
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    meta: dict = dc_field(default_factory=dict)

    def __call__(self, xi):
        xi = _as_points(xi)
        shape = xi.shape
        out = np.asarray(self.fn(xi.reshape(-1, 2)), dtype=float).reshape(shape)
        if not np.all(np.isfinite(out)):
            raise FieldError(f"{self.spec.describe()} produced non-finite values")
        return out

    evaluate = __call__

    def jac(self, xi, step=1e-7):
        """Jacobian matrices at ``xi``; forward differences when no closed form."""
        xi = _as_points(xi)
        shape = xi.shape
        pts = xi.reshape(-1, 2)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(pts), dtype=float).reshape(shape + (2,))
        return fd_jacobian(self, pts, step=step).reshape(shape + (2,))

    @property
    def label(self) -> str:
        return self.spec.describe()


def fd_jacobian(fn, pts, base_values=None, step=1e-7):
    """Forward-difference Jacobian of a vectorized planar map at ``pts``."""
    pts = np.asarray(pts, dtype=float)
    g0 = fn(pts) if base_values is None else base_values
    hs = step * np.maximum(1.0, np.abs(pts))
    jac = np.empty(pts.shape + (2,))
    for j in range(2):
        shifted = pts.copy()
        shifted[:, j] += hs[:, j]
        # recompute the actual increment to cancel representation error
        dh = shifted[:, j] - pts[:, j]
        jac[:, :, j] = (fn(shifted) - g0) / dh[:, None]
    return jac


@dataclass(frozen=True)
class QuotientSample:
    base: np.ndarray
    offset: np.ndarray
    q_lower: float
    q_upper_inv: float


# ---------------------------------------------------------------------------
# pathological primitive g(x) = int_0^x |t| + |sin(1/t)| dt
# ---------------------------------------------------------------------------

_K_CACHE = 4096  # breakpoints 1/(k pi) handled exactly for k < _K_CACHE


@functools.lru_cache(maxsize=1)
def _period_integrals():
    # int_{k pi}^{(k+1) pi} |sin s| / s^2 ds = (-1)^k (Ci((k+1) pi) - Ci(k pi))
    k = np.arange(1, _K_CACHE + 1, dtype=float)
    _, ci = special.sici(np.pi * np.arange(1, _K_CACHE + 2, dtype=float))
    per = (-1.0) ** k * (ci[1:] - ci[:-1])
    # tail[k-1] = int_{k pi}^{(K+1) pi} for k = 1..K
    tail = np.concatenate([np.cumsum(per[::-1])[::-1], [0.0]])
    return per, tail


def _abs_sin_tail(a):
    """int_a^inf |sin s| / s^2 ds for large a, through three terms."""
    sp = np.mod(a, np.pi)
    p_term = 1.0 - np.cos(sp) - 2.0 * sp / np.pi
    q_term = sp - np.sin(sp) - sp**2 / np.pi - (np.pi / 6.0 - 2.0 / np.pi)
    return 2.0 / (np.pi * a) - p_term / a**2 - 2.0 * q_term / a**3


def _abs_sin_primitive(x):
    """int_0^x |sin(1/t)| dt for x >= 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    if not np.any(pos):
        return out
    a = 1.0 / x[pos]
    big = _K_CACHE * np.pi
    _, tail = _period_integrals()
    far = _abs_sin_tail((_K_CACHE + 1) * np.pi)
    res = np.empty_like(a)
    large = a >= big
    res[large] = _abs_sin_tail(a[large])
    small = ~large
    if np.any(small):
        aa = a[small]
        k = np.floor(aa / np.pi).astype(int)  # aa in [k pi, (k+1) pi)
        upper = (k + 1) * np.pi
        si_u, ci_u = special.sici(upper)
        si_a, ci_a = special.sici(aa)
        # int sin s / s^2 = -sin s / s + Ci(s); sign of sin on the period is (-1)^k
        partial = (-1.0) ** k * ((-np.sin(upper) / upper + ci_u) - (-np.sin(aa) / aa + ci_a))
        # tail[k] covers [(k+1) pi, (K+1) pi]
        res[small] = partial + tail[k] + far
    out[pos] = res
    return out


def pathological_primitive(x):
    """g(x) = int_0^x (|t| + |sin(1/t)|) dt, odd in x."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.sign(x) * (0.5 * ax**2 + _abs_sin_primitive(ax))


def pathological_derivative(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(x != 0, np.abs(np.sin(1.0 / np.where(x != 0, x, 1.0))), 0.0)
    return np.abs(x) + s


# ---------------------------------------------------------------------------
# one-dimensional components for separable fields
# ---------------------------------------------------------------------------


def _component(text):
    """Return (value, derivative, primitive) callables for a component spec."""
    name, _, arg = str(text).partition(":")
    name = name.strip()
    if name == "linear":
        a = float(arg) if arg else 1.0
        if a <= 0:
            raise FieldError("linear component needs a positive slope")
        return (lambda t: a * t, lambda t: np.full_like(t, a), lambda t: 0.5 * a * t**2)
    if name == "power":
        q = float(arg)
        if q <= 0:
            raise FieldError("power component needs a positive exponent")

        def deriv(t):
            at = np.abs(t)
            with np.errstate(divide="ignore"):
                return np.where(at > 0, q * at ** (q - 1.0), 0.0 if q > 1 else (1.0 if q == 1 else np.inf))

        return (
            lambda t: np.sign(t) * np.abs(t) ** q,
            deriv,
            lambda t: np.abs(t) ** (q + 1.0) / (q + 1.0),
        )
    if name == "pathological":
        return (pathological_primitive, pathological_derivative, None)
    raise FieldError(f"unknown separable component {text!r}")


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _identity():
    spec = FieldSpec("identity")
    return MonotoneField(
        spec,
        lambda x: x.copy(),
        is_gradient=True,
        smoothness_note="linear",
        jacobian=lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy(),
        potential=lambda x: 0.5 * np.sum(x * x, axis=-1),
    )


def _p_laplacian(p):
    p = float(p)
    if not p > 1:
        raise FieldError(f"p_laplacian needs p > 1, got {p}")

    def fn(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r > 0, r ** (p - 2.0), 0.0)
        return w * x

    def jac(x):
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        w = np.where(r > 0, safe ** (p - 2.0), 0.0 if p > 2 else (1.0 if p == 2 else np.inf))
        w4 = np.where(r > 0, (p - 2.0) * safe ** (p - 4.0), 0.0)
        out = w[:, None, None] * np.eye(2) + w4[:, None, None] * np.einsum("ni,nj->nij", x, x)
        return out

    note = "smooth away from 0" + ("; degenerate at 0" if p > 2 else "; singular at 0" if p < 2 else "")
    return MonotoneField(
        FieldSpec("p_laplacian", {"p": p}),
        fn,
        is_gradient=True,
        smoothness_note=note,
        jacobian=jac if p >= 2 else None,
        potential=lambda x: np.linalg.norm(x, axis=-1) ** p / p,
    )


def _rotational_gm(m):
    m = float(m)
    if abs(m) > 0.5:
        raise FieldError(f"rotational_gm needs |m| <= 1/2, got {m}")

    def fn(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
        return x + m * lg * rot(x)

    return MonotoneField(
        FieldSpec("rotational_gm", {"m": m}),
        fn,
        is_gradient=(m == 0),
        smoothness_note="antisymmetric part of the Jacobian blows up logarithmically at 0",
    )


def _g0_cubic():
    def fn(x):
        a = x[:, 0]
        return np.stack([a * a * a - x[:, 1], a + x[:, 1]], axis=-1)  # a**3 goes through pow

    def jac(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[:, 0, 0] = 3.0 * x[:, 0] ** 2
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        out[:, 1, 1] = 1.0
        return out

    return MonotoneField(
        FieldSpec("g0_cubic"), fn, is_gradient=False, smoothness_note="polynomial", jacobian=jac
    )


def _separable(f_text, g_text, kind="separable"):
    fv, fd, fp = _component(f_text)
    gv, gd, gp = _component(g_text)

    def fn(x):
        return np.stack([fv(x[:, 0]), gv(x[:, 1])], axis=-1)

    def jac(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[:, 0, 0] = fd(x[:, 0])
        out[:, 1, 1] = gd(x[:, 1])
        return out

    pot = None
    if fp is not None and gp is not None:
        pot = lambda x: fp(x[..., 0]) + gp(x[..., 1])  # noqa: E731
    smooth = all(not str(t).startswith("pathological") for t in (f_text, g_text))
    params = {} if kind == "pathological_sin" else {"f": str(f_text), "g": str(g_text)}
    return MonotoneField(
        FieldSpec(kind, params),
        fn,
        is_gradient=True,
        smoothness_note="separable" if smooth else "derivative oscillates near x = 0",
        jacobian=jac if smooth else None,
        potential=pot,
    )


def make_catalog_field(spec: FieldSpec | str, **params: Any) -> MonotoneField:
    """Build a field from a catalog spec.

    >>> make_catalog_field("g0_cubic")(np.array([1.0, 2.0]))
    array([-1.,  3.])
    """
    if isinstance(spec, str):
        spec = FieldSpec(spec, dict(params))
    kind, p = spec.kind, spec.params
    if kind == "identity":
        out = _identity()
    elif kind == "p_laplacian":
        if "p" not in p:
            raise FieldError("p_laplacian needs parameter p")
        out = _p_laplacian(p["p"])
    elif kind == "rotational_gm":
        if "m" not in p:
            raise FieldError("rotational_gm needs parameter m")
        out = _rotational_gm(p["m"])
    elif kind == "g0_cubic":
        out = _g0_cubic()
    elif kind == "separable":
        if "f" not in p or "g" not in p:
            raise FieldError("separable needs components f and g")
        out = _separable(p["f"], p["g"])
    elif kind == "pathological_sin":
        out = _separable("pathological", "linear:1", kind="pathological_sin")
    elif kind == "counterexample_s6":
        from .beltrami import build_counterexample

        return build_counterexample().G
    elif kind == "composite":
        from .duality import apply_chain

        base = make_catalog_field(p["base"])
        return apply_chain(base, p.get("chain", ()))
    else:
        raise FieldError(f"unknown field kind {kind!r}")
    if spec.label:
        out = MonotoneField(
            FieldSpec(out.spec.kind, out.spec.params, spec.label),
            out.fn,
            out.is_gradient,
            out.smoothness_note,
            out.jacobian,
            out.potential,
            out.meta,
        )
    return out


# ---------------------------------------------------------------------------
# gaps, quotients, modulus of monotony
# ---------------------------------------------------------------------------


def monotonicity_gap(field, a, b):
    """<G(a) - G(b), a - b>, vectorized over leading axes."""
    a = _as_points(a)
    b = _as_points(b)
    return np.sum((field(a) - field(b)) * (a - b), axis=-1)


def quotients(field, base, offset, base_values=None):
    """Lower and inverse-upper difference quotients, vectorized.

    Returns ``(q_lower, q_upper_inv)`` with ``q_lower = <D G, z>/|z|^2`` and
    ``q_upper_inv = <D G, z>/|D G|^2`` (``+inf`` when ``|D G|`` underflows).
    """
    base = _as_points(base)
    offset = _as_points(offset)
    base, offset = np.broadcast_arrays(base, offset)
    nz = np.sum(offset * offset, axis=-1)
    if np.any(nz == 0):
        raise ValueError("offset must be nonzero")
    g0 = field(base) if base_values is None else np.broadcast_to(base_values, base.shape)
    d = field(base + offset) - g0
    inner = np.sum(d * offset, axis=-1)
    nd = np.sqrt(np.sum(d * d, axis=-1))
    q_lower = inner / nz
    with np.errstate(divide="ignore", invalid="ignore"):
        q_upper_inv = np.where(nd < UNDERFLOW_GUARD, np.inf, inner / np.where(nd > 0, nd, 1.0) ** 2)
    return q_lower, q_upper_inv


def quotient_sample(field, base, offset) -> QuotientSample:
    base = _as_points(base).astype(float)
    offset = _as_points(offset).astype(float)
    if not np.any(offset != 0):
        raise ValueError("offset must be nonzero")
    ql, qu = quotients(field, base[None], offset[None])
    return QuotientSample(base, offset, float(ql[0]), float(qu[0]))


def _disc_samples(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    t = 2 * np.pi * rng.random(n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


def modulus_of_monotony(field, t, box_radius, samples=100_000, seed=0, refine_rounds=8):
    """Sampled upper estimate of the modulus of monotony restricted to a disc.

    Pairs ``a, b`` are drawn inside ``B_box_radius`` with ``|a - b|`` in
    ``[t, 2 box_radius]``.  Half of the pairs sit at separation exactly ``t``:
    along any segment the gap ``<G(a + s d) - G(a), s d>`` is nondecreasing
    in ``s``, so the infimum is approached there.  The best candidates are
    then refined by shrinking random perturbations.  Every returned value is
    the gap of an actual pair, hence an upper bound of the restricted
    infimum.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if t <= 0 or box_radius <= t / 2:
        raise ValueError("need t > 0 and box_radius > t/2")
    rng = np.random.default_rng(seed)
    n = int(samples)
    n_exact = n // 2
    sep = np.full(n, float(t))
    hi = 2.0 * box_radius
    sep[n_exact:] = t * (hi / t) ** (rng.random(n - n_exact) ** 2)
    ang = 2 * np.pi * rng.random(n)
    d = sep[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    room = np.maximum(box_radius - sep / 2, 0.0)
    mid = _disc_samples(rng, n, 1.0) * room[:, None]
    a, b = mid + d / 2, mid - d / 2
    gaps = monotonicity_gap(field, a, b)
    best = float(np.min(gaps))
    # local refinement around the best pairs at fixed separation t
    k = min(64, n)
    order = np.argsort(gaps)[:k]
    mid_k, ang_k = mid[order], ang[order]
    room_t = box_radius - t / 2
    scale = room_t / 4 if room_t > 0 else 0.0
    per = max(1, n // (4 * refine_rounds * k))
    for _ in range(refine_rounds):
        if scale <= 0:
            break
        cand_mid = mid_k[:, None, :] + scale * rng.standard_normal((k, per, 2))
        nrm = np.linalg.norm(cand_mid, axis=-1, keepdims=True)
        cand_mid = np.where(nrm > room_t, cand_mid * room_t / np.maximum(nrm, 1e-300), cand_mid)
        cand_ang = ang_k[:, None] + (scale / max(t, 1e-12)) * rng.standard_normal((k, per))
        dd = t * np.stack([np.cos(cand_ang), np.sin(cand_ang)], axis=-1)
        g = monotonicity_gap(field, cand_mid + dd / 2, cand_mid - dd / 2)
        j = np.argmin(g, axis=1)
        gj = g[np.arange(k), j]
        better = gj < monotonicity_gap(
            field,
            mid_k + (t / 2) * np.stack([np.cos(ang_k), np.sin(ang_k)], -1),
            mid_k - (t / 2) * np.stack([np.cos(ang_k), np.sin(ang_k)], -1),
        )
        mid_k = np.where(better[:, None], cand_mid[np.arange(k), j], mid_k)
        ang_k = np.where(better, cand_ang[np.arange(k), j], ang_k)
        best = min(best, float(np.min(gj)))
        scale *= 0.5
    return best
