"""Unit-disc triangulation and piecewise-affine grid functions."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

__all__ = ["DiscDomain", "GridFunction", "build_disc_mesh", "interpolate"]


@dataclass(frozen=True, eq=False)
class DiscDomain:
    """Conforming triangulation of the closed unit disc.

    ``grads[t, a]`` is the (constant) gradient of the hat function of the
    ``a``-th vertex of triangle ``t``.
    """

    points: np.ndarray
    tris: np.ndarray
    h: float
    boundary_nodes: np.ndarray

    @cached_property
    def areas(self):
        p = self.points[self.tris]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def grads(self):
        p = self.points[self.tris]
        # grad phi_a = rot90(opposite edge) / (2 area), oriented inward
        out = np.empty((len(self.tris), 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            e = p[:, c] - p[:, b]
            out[:, a, 0] = -e[:, 1]
            out[:, a, 1] = e[:, 0]
        return out / (2.0 * self.areas)[:, None, None]

    @cached_property
    def centroids(self):
        return self.points[self.tris].mean(axis=1)

    @cached_property
    def interior_nodes(self):
        mask = np.ones(len(self.points), dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @cached_property
    def edges(self):
        """Unique edges (E, 2) and the triangle-to-edge map (T, 3); edge a is opposite vertex a."""
        loc = np.stack([self.tris[:, [1, 2]], self.tris[:, [2, 0]], self.tris[:, [0, 1]]], axis=1)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    @cached_property
    def boundary_edges(self):
        edges, t2e = self.edges
        counts = np.bincount(t2e.ravel(), minlength=len(edges))
        return np.flatnonzero(counts == 1)

    @cached_property
    def center_node(self):
        return int(np.argmin(np.linalg.norm(self.points, axis=1)))

    def min_angle_deg(self):
        p = self.points[self.tris]
        ang = []
        for a in range(3):
            u = p[:, (a + 1) % 3] - p[:, a]
            v = p[:, (a + 2) % 3] - p[:, a]
            cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(ang))

    def content_hash(self):
        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.points).tobytes())
        m.update(np.ascontiguousarray(self.tris).tobytes())
        return m.hexdigest()[:16]

    def mass_lumped(self):
        w = np.zeros(len(self.points))
        np.add.at(w, self.tris.ravel(), np.repeat(self.areas / 3.0, 3))
        return w


def build_disc_mesh(h: float) -> DiscDomain:
    """Ring mesh: ring k at radius k/N carries 6k nodes, N = ceil(1/h).

    Alternate rings are rotated by half a node spacing so the Delaunay
    triangles stay close to equilateral.
    """
    h = float(h)
    if not 0 < h <= 0.5:
        raise ValueError(f"h must lie in (0, 0.5], got {h}")
    N = int(np.ceil(1.0 / h - 1e-12))
    pts = [np.zeros((1, 2))]
    for k in range(1, N + 1):
        n = 6 * k
        t = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append((k / N) * np.stack([np.cos(t), np.sin(t)], axis=-1))
    points = np.vstack(pts)
    tri = Delaunay(points)
    tris = tri.simplices.astype(np.int64)
    p = points[tris]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    # drop slivers Delaunay may create along the polygonal boundary
    keep = np.abs(area) > 1e-12 * h * h
    tris = tris[keep]
    bnd = np.arange(len(points) - 6 * N, len(points))
    dom = DiscDomain(points, tris, h, bnd)
    if dom.min_angle_deg() < 20.0:
        raise RuntimeError(f"mesh quality check failed: min angle {dom.min_angle_deg():.1f}")
    return dom


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-affine function given by nodal values (or CR edge values)."""

    domain: DiscDomain
    values: np.ndarray
    space: str = "P1"

    @cached_property
    def gradient(self):
        d = self.domain
        if self.space == "P1":
            return np.einsum("ta,tak->tk", self.values[d.tris], d.grads)
        # CR basis on edge opposite vertex a is 1 - 2 phi_a
        _, t2e = d.edges
        return -2.0 * np.einsum("ta,tak->tk", self.values[t2e], d.grads)

    @property
    def nodal_values(self):
        return self.values

    def lipschitz(self):
        return float(np.max(np.linalg.norm(self.gradient, axis=1)))

    def cell_values(self):
        """Value at triangle centroids."""
        if self.space == "P1":
            return self.values[self.domain.tris].mean(axis=1)
        _, t2e = self.domain.edges
        return self.values[t2e].mean(axis=1)


def interpolate(domain: DiscDomain, fn) -> GridFunction:
    return GridFunction(domain, np.asarray(fn(domain.points), dtype=float))
