"""Sampled ellipticity atlases, bad-set detection, coverings and the
localization radius chain."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .field_core import MonotoneField, quotients

__all__ = [
    "EllipticityProfile",
    "BadComponent",
    "CoveringCertificate",
    "CoveringError",
    "RadiusCertificate",
    "sample_ellipticity",
    "detect_bad_set",
    "build_covering",
    "certified_radius",
    "stilde_inclusion_audit",
    "DEFAULT_SCALES",
]

DEFAULT_SCALES = (1e-1, 1e-2, 1e-3)
REL_TOL = 0.05


def _directions(n):
    t = 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _axis(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    # round to kill representation noise so that e.g. 0 is hit exactly
    return np.round(lo + step * np.arange(n), 12)


@dataclass(frozen=True, eq=False)
class EllipticityProfile:
    """Per-node quotient extrema on a regular grid.

    Arrays are indexed ``[iy, ix]``; per-scale arrays carry a leading scale
    axis.  ``lambda_hat`` is the minimum over scales and directions of the
    lower quotient, ``Lambda_hat`` the maximum of the reciprocal
    inverse-type quotient; ``stilde`` keeps the per-scale maximum of the
    lower quotient for the inclusion audit.
    """

    box: tuple
    grid_step: float
    xs: np.ndarray
    ys: np.ndarray
    scales: np.ndarray
    lambda_scale: np.ndarray
    Lambda_scale: np.ndarray
    stilde_scale: np.ndarray
    n_dirs: int
    label: str = ""

    @property
    def lambda_hat(self):
        return self.lambda_scale.min(axis=0)

    @property
    def Lambda_hat(self):
        return self.Lambda_scale.max(axis=0)

    @property
    def nodes(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X, Y], axis=-1)

    def index_of(self, pts):
        """Nearest grid indices (iy, ix) and a mask of points inside the box."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ix = np.rint((pts[:, 0] - self.xs[0]) / self.grid_step).astype(int)
        iy = np.rint((pts[:, 1] - self.ys[0]) / self.grid_step).astype(int)
        inside = (ix >= 0) & (ix < len(self.xs)) & (iy >= 0) & (iy < len(self.ys))
        return np.clip(iy, 0, len(self.ys) - 1), np.clip(ix, 0, len(self.xs) - 1), inside

    def lookup(self, pts):
        iy, ix, inside = self.index_of(pts)
        return self.lambda_hat[iy, ix], self.Lambda_hat[iy, ix], inside

    def at(self, point):
        iy, ix, _ = self.index_of(point)
        return {
            "lambda_scale": self.lambda_scale[:, iy[0], ix[0]].tolist(),
            "Lambda_scale": self.Lambda_scale[:, iy[0], ix[0]].tolist(),
        }

    def rows(self):
        """Flat records: x, y, lambda_hat, Lambda_hat, then per-scale pairs."""
        X, Y = np.meshgrid(self.xs, self.ys)
        cols = [X.ravel(), Y.ravel(), self.lambda_hat.ravel(), self.Lambda_hat.ravel()]
        for k in range(len(self.scales)):
            cols += [self.lambda_scale[k].ravel(), self.Lambda_scale[k].ravel()]
        return np.stack(cols, axis=1)

    def header(self):
        h = ["x", "y", "lambda_hat", "Lambda_hat"]
        for s in self.scales:
            h += [f"lambda@{s:g}", f"Lambda@{s:g}"]
        return h


def sample_ellipticity(field: MonotoneField, box, grid_step, scales=DEFAULT_SCALES, n_dirs=16, chunk=4096):
    """Quotient extrema over ``n_dirs`` offsets per scale at each grid node.

    ``box`` is ``(xmin, xmax, ymin, ymax)``.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.size == 0:
        raise ValueError("scales must be nonempty")
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be positive and decreasing")
    if n_dirs < 16:
        raise ValueError("at least 16 directions per scale")
    xmin, xmax, ymin, ymax = map(float, box)
    step = float(grid_step)
    xs, ys = _axis(xmin, xmax, step), _axis(ymin, ymax, step)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    dirs = _directions(n_dirs)
    S, N = len(scales), len(nodes)
    lam = np.empty((S, N))
    Lam = np.empty((S, N))
    sti = np.empty((S, N))
    for start in range(0, N, chunk):
        base = nodes[start : start + chunk]
        g0 = field(base)
        for k, s in enumerate(scales):
            b = np.repeat(base, n_dirs, axis=0)
            off = np.tile(s * dirs, (len(base), 1))
            ql, qu = quotients(field, b, off, base_values=np.repeat(g0, n_dirs, axis=0))
            ql = ql.reshape(len(base), n_dirs)
            with np.errstate(divide="ignore"):
                inv = np.where(np.isinf(qu), 0.0, 1.0 / qu).reshape(len(base), n_dirs)
            lam[k, start : start + len(base)] = ql.min(axis=1)
            sti[k, start : start + len(base)] = ql.max(axis=1)
            Lam[k, start : start + len(base)] = inv.max(axis=1)
    shape = (S, len(ys), len(xs))
    return EllipticityProfile(
        (xmin, xmax, ymin, ymax),
        step,
        xs,
        ys,
        scales,
        lam.reshape(shape),
        Lam.reshape(shape),
        sti.reshape(shape),
        n_dirs,
        field.label,
    )


@dataclass(frozen=True)
class BadComponent:
    cells: np.ndarray  # (k, 2) integer (iy, ix)
    center: np.ndarray  # grid-snapped centroid
    size: int


def detect_bad_set(profile: EllipticityProfile, lambda_floor, Lambda_ceil):
    """Connected components of cells with lambda_hat < floor and Lambda_hat > ceil."""
    if not (lambda_floor > 0 and Lambda_ceil > 0):
        raise ValueError("thresholds must be positive")
    mask = (profile.lambda_hat < lambda_floor) & (profile.Lambda_hat > Lambda_ceil)
    lab, n = ndimage.label(mask, structure=np.ones((3, 3)))
    out = []
    for k in range(1, n + 1):
        cells = np.argwhere(lab == k)
        cy, cx = cells.mean(axis=0)
        center = np.array([profile.xs[int(round(cx))], profile.ys[int(round(cy))]])
        out.append(BadComponent(cells, center, len(cells)))
    return out


class CoveringError(RuntimeError):
    def __init__(self, message, uncovered):
        super().__init__(f"{message}: {len(uncovered)} uncovered grid points")
        self.uncovered = np.asarray(uncovered)


@dataclass(frozen=True)
class CoveringCertificate:
    M: float
    r: float
    lam: float
    Lam: float
    bad_centers: np.ndarray
    eta: float
    verification_grid: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "M": self.M,
            "r": self.r,
            "lambda": self.lam,
            "Lambda": self.Lam,
            "bad_centers": np.asarray(self.bad_centers).tolist(),
            "eta": self.eta,
            "verification_grid": self.verification_grid,
            "note": "sampled covering; either |grad u(B_delta)| < r or grad u(B_delta) lies in the bad balls "
            "(connected-complement variant available when the complement is connected)",
        }


def _disk(k):
    i = np.arange(-k, k + 1)
    return (i[:, None] ** 2 + i[None, :] ** 2) <= k * k


def build_covering(profile: EllipticityProfile, M, r, lam, Lam, centers=(), rel_tol=REL_TOL):
    """Grid check of the covering of the closed ball B_{2M} and its Lebesgue number.

    A node is in the sampled O_lambda when ``lambda_hat >= lam (1 - rel_tol)``
    and in the sampled V_Lambda when ``Lambda_hat <= Lam (1 + rel_tol)``.
    ``eta`` is the largest multiple of the grid step below ``r`` such that
    every node of B_{2M} has its eta-disc (in grid nodes) inside one member.
    ``Lam=None`` drops the V side (lower-ellipticity covering only).
    """
    M, r, lam = map(float, (M, r, lam))
    Lam = None if Lam is None else float(Lam)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if np.linalg.norm(centers[i] - centers[j]) < 4 * r:
                raise ValueError("bad centers must be 4r-separated")
    xmin, xmax, ymin, ymax = profile.box
    if min(-xmin, xmax, -ymin, ymax) < 2 * M - 1e-12:
        raise ValueError("profile box must contain the closed ball B_{2M}")
    nodes = profile.nodes
    in_ball = np.linalg.norm(nodes, axis=-1) <= 2 * M + 1e-12
    O = profile.lambda_hat >= lam * (1 - rel_tol)
    V = profile.Lambda_hat <= Lam * (1 + rel_tol) if Lam is not None else np.zeros(in_ball.shape, dtype=bool)
    if len(centers):
        dist = np.min(np.linalg.norm(nodes[:, :, None, :] - centers[None, None], axis=-1), axis=-1)
    else:
        dist = np.full(in_ball.shape, np.inf)
    covered0 = O | V | (dist < r)
    if not np.all(covered0[in_ball]):
        bad = nodes[in_ball & ~covered0]
        raise CoveringError("covering failure", bad)
    step = profile.grid_step
    best = 0
    k = 1
    while k * step < r:
        se = _disk(k)
        Oe = ndimage.binary_erosion(O, structure=se, border_value=0)
        Ve = ndimage.binary_erosion(V, structure=se, border_value=0)
        ok = Oe | Ve | (dist + k * step < r)
        if not np.all(ok[in_ball]):
            break
        best = k
        k += 1
    if best == 0:
        bad = nodes[in_ball & ~(ndimage.binary_erosion(O, _disk(1), border_value=0) | ndimage.binary_erosion(V, _disk(1), border_value=0) | (dist + step < r))]
        raise CoveringError("no positive Lebesgue number at this grid resolution", bad)
    return CoveringCertificate(
        M, r, lam, Lam, centers, best * step,
        {"grid_step": step, "box": list(profile.box), "scales": profile.scales.tolist(), "rel_tol": rel_tol},
    )


@dataclass(frozen=True)
class RadiusCertificate:
    delta_single: float
    log_delta_single: float
    K: int
    delta_final: float
    log_delta_final: float
    C_O: float
    C_V: float
    c0: float
    c_iter: float
    inputs: dict = dc_field(default_factory=dict)

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("delta_single", "log_delta_single", "K", "delta_final", "log_delta_final", "C_O", "C_V", "c0", "c_iter")}
        d["inputs"] = self.inputs
        d["note"] = "conditional on (c0, c_iter); the O-side radius reuses the V-side exponential shape"
        return d


def certified_radius(cert: CoveringCertificate, grad_l2, G_grad_l2, c0=1.0, c_iter=1.0, monotony_floor=None, safety=0.5):
    """Localization radius from the constant chain, computed in log space.

    ``C_O = c0 G_grad_l2^2 / lambda^2``, ``C_V = c0 Lambda^2 grad_l2^2``,
    ``log delta = -32 pi max(C_O, C_V) / floor^2 - log 2 + log(1 - safety)``,
    ``K = ceil(c_iter M^2 / eta^2)`` and ``delta_final = delta^K``.
    """
    if monotony_floor is None or not monotony_floor > 0:
        raise ValueError("monotony_floor must be positive")
    for name, val in (("grad_l2", grad_l2), ("G_grad_l2", G_grad_l2), ("c0", c0), ("c_iter", c_iter)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    if not 0 <= safety < 1:
        raise ValueError("safety must lie in [0, 1)")
    C_O = c0 * G_grad_l2**2 / cert.lam**2
    C_V = c0 * cert.Lam**2 * grad_l2**2 if cert.Lam is not None else 0.0
    log_single = -32.0 * math.pi * max(C_O, C_V) / monotony_floor**2 - math.log(2.0) + math.log1p(-safety)
    K = int(math.ceil(c_iter * cert.M**2 / cert.eta**2))
    log_final = K * log_single
    return RadiusCertificate(
        math.exp(log_single),
        log_single,
        K,
        math.exp(log_final),
        log_final,
        C_O,
        C_V,
        float(c0),
        float(c_iter),
        {
            "M": cert.M, "lambda": cert.lam, "Lambda": cert.Lam, "eta": cert.eta,
            "grad_l2": grad_l2, "G_grad_l2": G_grad_l2, "monotony_floor": monotony_floor, "safety": safety,
        },
    )


def _blows_up(series, growth, rel_tol):
    """Per-node flag: values grow by ``growth`` across scales, nondecreasing up to rel_tol."""
    first, last = series[0], series[-1]
    mono = np.all(series[1:] >= series[:-1] * (1 - rel_tol), axis=0)
    return (last >= growth * np.maximum(first, 1e-300)) & mono


def stilde_inclusion_audit(field: MonotoneField, box, scales=(1e-1, 1e-2, 1e-3, 1e-4), grid_step=0.1, growth=10.0, rel_tol=REL_TOL, profile=None):
    """Compare blow-up of the symmetric-part and inverse-type quotients.

    The symmetric side is the per-scale maximum of the lower quotient; the
    singular side the per-scale maximum of its inverse-type counterpart.
    A side is flagged by growth when its values grow by ``growth`` across
    the scales.  Because |DG|^2 |zeta|^2 >= <DG, zeta>^2, the singular-side
    value dominates the symmetric one at every sample; a symmetric-flagged
    node whose singular value does not dominate at the finest scale, and is
    not growth-flagged itself, is a violation.
    """
    if profile is None:
        profile = sample_ellipticity(field, box, grid_step, scales)
    st = _blows_up(profile.stilde_scale, growth, rel_tol)
    ss_growth = _blows_up(profile.Lambda_scale, growth, rel_tol)
    dominated = profile.Lambda_scale[-1] >= profile.stilde_scale[-1] * (1 - 1e-9)
    ss = ss_growth | (st & dominated)
    nodes = profile.nodes
    return {
        "field": field.label,
        "scales": profile.scales.tolist(),
        "stilde_flagged": nodes[st].tolist(),
        "s_flagged": nodes[ss].tolist(),
        "s_flagged_by_growth": nodes[ss_growth].tolist(),
        "violations": nodes[st & ~ss].tolist(),
        "strict_points": nodes[ss_growth & ~st].tolist(),
        "profile": profile,
    }
