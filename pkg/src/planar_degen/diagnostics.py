"""Probes on solved instances: gradient images, the max/min principle,
Caccioppoli ratios and the localization dichotomy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, cKDTree
from scipy.spatial import QhullError

from .field_core import MonotoneField
from .mesh import GridFunction

__all__ = [
    "GradientImage",
    "CacciopoliReport",
    "gradient_image",
    "maxmin_check",
    "cacciopoli_ratio",
    "localization_probe",
    "recovered_gradient",
    "triangles_meeting_disc",
]


def _seg_dist0(a, b):
    """Distance from the origin to segments a-b (vectorized)."""
    d = b - a
    L2 = np.sum(d * d, axis=-1)
    t = np.where(L2 > 0, -np.sum(a * d, axis=-1) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    p = a + t[..., None] * d
    return np.linalg.norm(p, axis=-1)


def triangles_meeting_disc(domain, radius):
    """Mask of triangles whose closed set meets the closed disc B_radius."""
    p = domain.points[domain.tris]
    dist = np.minimum.reduce([_seg_dist0(p[:, a], p[:, (a + 1) % 3]) for a in range(3)])
    # origin inside a (positively oriented) triangle
    inside = np.ones(len(p), dtype=bool)
    for a in range(3):
        e = p[:, (a + 1) % 3] - p[:, a]
        inside &= e[:, 0] * (-p[:, a, 1]) - e[:, 1] * (-p[:, a, 0]) >= 0
    dist[inside] = 0.0
    return dist <= radius


def triangles_meeting_circle(domain, radius):
    p = domain.points[domain.tris]
    r = np.linalg.norm(p, axis=-1)
    return triangles_meeting_disc(domain, radius) & (r.max(axis=1) >= radius)


def _diameter(pts):
    pts = np.unique(np.asarray(pts, dtype=float), axis=0)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # degenerate (collinear) cloud: brute force below
    if len(pts) > 4000:
        # collinear fallback on a huge cloud: extreme points along the principal axis
        c = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(c, full_matrices=False)
        s = c @ vt[0]
        return float(np.linalg.norm(pts[np.argmax(s)] - pts[np.argmin(s)]))
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


@dataclass(frozen=True)
class GradientImage:
    radius: float
    points: np.ndarray
    diameter: float

    def to_dict(self):
        return {"radius": self.radius, "n_points": int(len(self.points)), "diameter": self.diameter}


def gradient_image(u: GridFunction, delta) -> GradientImage:
    """Cell gradients of ``u`` over triangles meeting B_delta, with exact diameter."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    sel = triangles_meeting_disc(u.domain, delta)
    if not np.any(sel):
        raise ValueError("no triangle meets B_delta; mesh too coarse")
    pts = u.gradient[sel]
    return GradientImage(float(delta), pts, _diameter(pts))


def _alpha_boundary(pts, alpha):
    """Vertices on the boundary of the alpha shape (circumradius < alpha)."""
    pts = np.unique(pts, axis=0)
    if len(pts) < 4:
        return pts
    try:
        tri = Delaunay(pts)
    except QhullError:
        return pts
    s = tri.simplices
    p = pts[s]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        R = a * b * c / (4.0 * area)
    keep = s[np.isfinite(R) & (R < alpha)]
    if len(keep) == 0:
        return pts
    edges = np.sort(np.concatenate([keep[:, [0, 1]], keep[:, [1, 2]], keep[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(edges, axis=0, return_counts=True)
    bnd = np.unique(uniq[cnt == 1])
    # isolated points (in no kept triangle) are their own boundary
    used = np.zeros(len(pts), dtype=bool)
    used[keep.ravel()] = True
    used_b = np.zeros(len(pts), dtype=bool)
    used_b[bnd] = True
    return pts[used_b | ~used]


def maxmin_check(u: GridFunction, r=0.5, band_factor=2.0):
    """Discrete check that the boundary of grad u(B_r) lies near grad u(dB_r).

    The image boundary is the alpha-shape boundary of the cell-gradient cloud
    with alpha = band = ``band_factor * h * Lip``; a boundary point is a
    violation when it is farther than the band from the cloud over
    triangles meeting the circle |x| = r.
    """
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    dom = u.domain
    g = u.gradient
    cloud = g[triangles_meeting_disc(dom, r)]
    rim = g[triangles_meeting_circle(dom, r)]
    lip = u.lipschitz()
    band = band_factor * dom.h * lip
    if band <= 0 or np.ptp(cloud, axis=0).max() <= 1e-12 * max(1.0, lip):
        return {"r": r, "band": band, "n_boundary": 1, "n_violations": 0, "fraction": 0.0, "max_excess": 0.0}
    bpts = _alpha_boundary(cloud, band)
    dist, _ = cKDTree(rim).query(bpts)
    viol = dist > band
    return {
        "r": float(r),
        "band": float(band),
        "n_boundary": int(len(bpts)),
        "n_violations": int(viol.sum()),
        "fraction": float(viol.mean()),
        "max_excess": float(max(0.0, (dist - band).max())),
    }


def recovered_gradient(dom, cell_vals):
    """Area-weighted nodal average of a per-cell (T, k) field."""
    cell_vals = np.asarray(cell_vals, dtype=float)
    w = np.zeros(len(dom.points))
    np.add.at(w, dom.tris.ravel(), np.repeat(dom.areas, 3))
    out = np.zeros((len(dom.points), cell_vals.shape[1]))
    for a in range(3):
        np.add.at(out, dom.tris[:, a], dom.areas[:, None] * cell_vals)
    return out / w[:, None]


def _second_energy(dom, cell_vals):
    """Per-cell |grad V|^2 of the P1 interpolant of the recovered field V."""
    nodal = recovered_gradient(dom, cell_vals)
    tot = np.zeros(len(dom.tris))
    for k in range(nodal.shape[1]):
        gk = np.einsum("ta,tak->tk", nodal[dom.tris, k], dom.grads)
        tot += np.sum(gk * gk, axis=1)
    return tot


@dataclass(frozen=True)
class CacciopoliReport:
    side: str
    threshold: float
    lhs: float
    rhs_factor: float
    ratio: float
    preimage_fraction: float = 1.0
    sentinel: bool = False

    def to_dict(self):
        return {k: getattr(self, k) for k in ("side", "threshold", "lhs", "rhs_factor", "ratio", "preimage_fraction", "sentinel")}


def cacciopoli_ratio(u: GridFunction, field: MonotoneField, side="O_lambda", threshold=1.0, profile=None):
    """Empirical Caccioppoli constant on B_{1/2} restricted to a gradient preimage.

    Second derivatives use gradient recovery (area-weighted nodal averaging)
    followed by differentiation of the recovered P1 field.  With
    ``profile=None`` the good set is the whole plane.
    """
    if side not in ("O_lambda", "V_Lambda"):
        raise ValueError(f"unknown side {side!r}")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    dom = u.domain
    g = u.gradient
    Gg = field(g)
    half = np.linalg.norm(dom.centroids, axis=1) <= 0.5
    if profile is None:
        member = np.ones(len(g), dtype=bool)
    else:
        lam_hat, Lam_hat, inside = profile.lookup(g)
        if not np.all(inside):
            raise ValueError("profile does not cover the gradient range")
        member = lam_hat >= threshold if side == "O_lambda" else Lam_hat <= threshold
    if side == "O_lambda":
        dens = _second_energy(dom, g)
        rhs = float(np.sum(dom.areas * np.sum(Gg * Gg, axis=1))) / threshold**2
    else:
        dens = _second_energy(dom, Gg)
        rhs = threshold**2 * float(np.sum(dom.areas * np.sum(g * g, axis=1)))
    sel = half & member
    lhs = float(np.sum(dom.areas[sel] * dens[sel]))
    frac = float(dom.areas[sel].sum() / dom.areas[half].sum())
    if rhs <= 0:
        return CacciopoliReport(side, float(threshold), lhs, 0.0, math.nan, frac, True)
    return CacciopoliReport(side, float(threshold), lhs, rhs, lhs / rhs, frac)


def localization_probe(u: GridFunction, field: MonotoneField, xi0, rho, delta_list):
    """Classify grad u(B_delta) against B_{4 rho}(xi0) and B_{3 rho}(xi0).

    Returns the (delta, class) table; ``mixed`` persisting at every delta
    is reported as inconclusive rather than failed.
    """
    xi0 = np.asarray(xi0, dtype=float).reshape(2)
    if not rho > 0:
        raise ValueError("rho must be positive")
    g_all = u.gradient
    dmin = float(np.min(np.linalg.norm(g_all - xi0, axis=1)))
    base = {"xi0": xi0.tolist(), "rho": float(rho), "min_distance_B1": dmin, "field": field.label}
    if dmin < rho:
        return {**base, "verdict": "not-applicable", "table": []}
    table = []
    for delta in sorted((float(d) for d in delta_list), reverse=True):
        img = gradient_image(u, delta)
        d = np.linalg.norm(img.points - xi0, axis=1)
        if np.all(d <= 4 * rho):
            cls = "inside"
        elif np.all(d >= 3 * rho):
            cls = "outside"
        else:
            cls = "mixed"
        table.append({"delta": delta, "class": cls, "n_points": int(len(d)), "diameter": img.diameter})
    classes = [row["class"] for row in table]
    if all(c == "mixed" for c in classes):
        verdict = "inconclusive"
    elif classes[-1] == "mixed":
        verdict = "mixed-at-finest"
    else:
        verdict = classes[-1]
    pure_below = None
    for row in reversed(table):
        if row["class"] == "mixed":
            break
        pure_below = row["delta"]
    return {**base, "verdict": verdict, "pure_below": pure_below, "table": table}
