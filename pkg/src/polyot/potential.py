"""Piecewise-affine convex analysis.

A function here is a finite max of affine pieces f(x) = max_j (g_j . x + c_j).
Conjugation, subdifferentials and the Monge-Ampere (Alexandrov) measure are
all computed combinatorially from the induced polyhedral subdivision, so the
identities they satisfy are exact up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _powercell as pc
from .geometry import (
    ConvexPolygon,
    GeometryError,
    Location,
    Point2,
    Polygon,
    as_point,
    clip_convex_tagged,
    convex_hull,
    is_convex_polygon,
    point_location,
    triangulate,
)


class NoConvergence(Exception):
    pass


@dataclass(frozen=True)
class AffineFunc:
    gradient: Point2
    intercept: float

    def __post_init__(self):
        object.__setattr__(self, "gradient", as_point(self.gradient))
        object.__setattr__(self, "intercept", float(self.intercept))

    def __call__(self, x) -> float:
        return self.gradient.x * x[0] + self.gradient.y * x[1] + self.intercept


class PiecewiseAffineConvex:
    """max of affine pieces; convex and globally Lipschitz by construction.

    Duplicate gradients are merged (max intercept wins) and pieces strictly
    below the upper envelope are pruned; the original piece order of the
    survivors is preserved.
    """

    def __init__(self, gradients, intercepts, prune: bool = True):
        g = np.asarray(gradients, dtype=float).reshape(-1, 2)
        c = np.asarray(intercepts, dtype=float).reshape(-1)
        if len(g) == 0:
            raise ValueError("need at least one affine piece")
        if len(g) != len(c):
            raise ValueError("gradients/intercepts length mismatch")
        if not (np.isfinite(g).all() and np.isfinite(c).all()):
            raise ValueError("non-finite affine piece")
        keep = self._dedupe_mask(g, c)
        if prune:
            keep &= self._envelope_mask(g, c, keep)
        self.gradients = g[keep].copy()
        self.intercepts = c[keep].copy()
        self.gradients.setflags(write=False)
        self.intercepts.setflags(write=False)

    @staticmethod
    def _dedupe_mask(g: np.ndarray, c: np.ndarray) -> np.ndarray:
        key = np.round(g / 1e-12).astype(np.int64)
        keep = np.ones(len(g), dtype=bool)
        best: dict[tuple, int] = {}
        for i, k in enumerate(map(tuple, key)):
            j = best.get(k)
            if j is None:
                best[k] = i
            elif c[i] > c[j]:
                keep[j] = False
                best[k] = i
            else:
                keep[i] = False
        return keep

    @staticmethod
    def _envelope_mask(g: np.ndarray, c: np.ndarray, cand: np.ndarray) -> np.ndarray:
        idx = np.flatnonzero(cand)
        if len(idx) <= 2:
            return np.ones(len(g), dtype=bool)
        gi, ci = g[idx], c[idx]
        span = gi - gi[0]
        rank = np.linalg.matrix_rank(span, tol=1e-12)
        keep = np.ones(len(g), dtype=bool)
        if rank <= 1:
            # Collinear gradients: 1-D lower hull of (t, -c).
            d = span[np.argmax(np.hypot(*span.T))]
            d = d / np.hypot(*d)
            t = gi @ d
            order = np.argsort(t, kind="stable")
            hull: list[int] = []
            for k in order:
                while len(hull) >= 2:
                    k1, k2 = hull[-2], hull[-1]
                    lhs = (-ci[k] + ci[k1]) * (t[k2] - t[k1])
                    rhs = (-ci[k2] + ci[k1]) * (t[k] - t[k1])
                    if lhs <= rhs + 1e-15 * max(1.0, abs(rhs)):
                        hull.pop()
                    else:
                        break
                hull.append(k)
            on = np.zeros(len(idx), dtype=bool)
            on[hull] = True
            keep[idx] = on
            return keep
        tris = pc.regular_triangulation(gi, ci)
        if tris is None:
            return keep
        on = np.zeros(len(idx), dtype=bool)
        on[np.unique(tris)] = True
        keep[idx] = on
        return keep

    def __len__(self) -> int:
        return len(self.gradients)

    @property
    def pieces(self) -> list[AffineFunc]:
        return [
            AffineFunc(Point2(*g), float(c)) for g, c in zip(self.gradients, self.intercepts)
        ]

    @property
    def lipschitz(self) -> float:
        return float(np.hypot(*self.gradients.T).max())

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float((self.gradients @ x + self.intercepts).max())

    def values(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, 2)
        return (xs @ self.gradients.T + self.intercepts).max(axis=1)

    def piece_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.gradients @ x + self.intercepts

    def active_indices(self, x, tol: float | None = None) -> np.ndarray:
        vals = self.piece_values(x)
        m = vals.max()
        if tol is None:
            tol = 1e-9 * (1.0 + abs(m))
        return np.flatnonzero(vals >= m - tol)

    @classmethod
    def from_pieces(cls, pieces) -> "PiecewiseAffineConvex":
        g = [(p.gradient.x, p.gradient.y) if isinstance(p, AffineFunc) else p[0] for p in pieces]
        c = [p.intercept if isinstance(p, AffineFunc) else p[1] for p in pieces]
        return cls(g, c)

    @classmethod
    def from_tangents(cls, points, values, grads) -> "PiecewiseAffineConvex":
        """Max of tangent planes of a smooth convex function sampled at points."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        v = np.asarray(values, dtype=float).reshape(-1)
        g = np.asarray(grads, dtype=float).reshape(-1, 2)
        return cls(g, v - (g * p).sum(axis=1))

    def to_json(self) -> dict:
        return {
            "pieces": [
                {"g": [float(gx), float(gy)], "c": float(c)}
                for (gx, gy), c in zip(self.gradients, self.intercepts)
            ]
        }

    @staticmethod
    def from_json(obj: dict) -> "PiecewiseAffineConvex":
        g = [p["g"] for p in obj["pieces"]]
        c = [p["c"] for p in obj["pieces"]]
        return PiecewiseAffineConvex(g, c)


@dataclass(frozen=True)
class SubdifferentialCell:
    at: Point2
    hull: ConvexPolygon


@dataclass(frozen=True)
class CenteredSection:
    center: Point2
    height: float
    shift: Point2
    region: ConvexPolygon
    balance_constant: float
    sup_ratio: float
    iterations: int


def evaluate(f: PiecewiseAffineConvex, x) -> float:
    return f.value(x)


def subdifferential_at(f: PiecewiseAffineConvex, x, tol: float | None = None) -> SubdifferentialCell:
    """Convex hull of the gradients active at x (within tol of the max)."""
    act = f.active_indices(x, tol)
    return SubdifferentialCell(at=as_point(x), hull=convex_hull(f.gradients[act]))


def gradient_hull(f: PiecewiseAffineConvex) -> ConvexPolygon:
    """Closure of the gradient image; the conjugate is finite exactly here."""
    return convex_hull(f.gradients)


def subdivision_vertices(f: PiecewiseAffineConvex) -> np.ndarray:
    """Points where >= 3 pieces tie: the atoms of the induced subdivision."""
    return pc.subdivision_vertices(f.gradients, f.intercepts)


def legendre(f: PiecewiseAffineConvex, domain: Polygon) -> PiecewiseAffineConvex:
    """Convex conjugate computed combinatorially, sup restricted to ``domain``.

    The sup of y.x - f(x) over a polygon is attained at a vertex of the
    subdivision induced by f's linearity cells, so the conjugate is the max of
    the pieces (x_v, -f(x_v)) over those vertices.  On the hull of f's
    gradients this agrees with the unrestricted conjugate whenever the domain
    contains the relevant cells.
    """
    corners: list[np.ndarray] = []
    if is_convex_polygon(domain):
        patches = [domain.coords]
    else:
        patches = triangulate(domain)
    for patch in patches:
        cells, _ = pc.power_cells(f.gradients, f.intercepts, np.asarray(patch, dtype=float))
        for cell in cells:
            if len(cell):
                corners.append(cell)
    if not corners:
        raise GeometryError("domain produced no subdivision vertices")
    pts = np.vstack(corners)
    key = np.round(pts / 1e-11).astype(np.int64)
    _, uniq = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(uniq)]
    vals = f.values(pts)
    return PiecewiseAffineConvex(pts, -vals)


def ma_measure(f: PiecewiseAffineConvex, region: Polygon) -> float:
    """Total mass of the Monge-Ampere measure of f carried inside region.

    Only 2-dimensional subdifferential images contribute; they sit at the
    subdivision vertices and their mass is the gradient-space area there.
    """
    verts, areas = pc.ma_atoms(f.gradients, f.intercepts)
    total = 0.0
    for v, a in zip(verts, areas):
        if a > 0 and point_location(region, v) is not Location.OUTSIDE:
            total += a
    return float(total)


def _section_polygon(f: PiecewiseAffineConvex, y0: np.ndarray, pbar: np.ndarray, level: float,
                     halfwidth: float):
    """Sublevel polygon {f(x) - pbar.x < level} clipped to a box around y0."""
    b = halfwidth
    box = np.array(
        [
            [y0[0] - b, y0[1] - b],
            [y0[0] + b, y0[1] - b],
            [y0[0] + b, y0[1] + b],
            [y0[0] - b, y0[1] + b],
        ]
    )
    normals = f.gradients - pbar
    offsets = level - f.intercepts
    norms = np.hypot(*normals.T)
    live = norms > 1e-14
    # Nearest cutting planes first so the running polygon shrinks quickly.
    dist = (offsets[live] - normals[live] @ y0) / norms[live]
    order = np.flatnonzero(live)[np.argsort(dist, kind="stable")]
    poly = box
    for j in order:
        n = normals[j] / norms[j]
        off = offsets[j] / norms[j]
        viol = poly @ n - off
        if (viol <= 1e-14).all():
            r = np.hypot(*(poly - y0).T).max() if len(poly) else 0.0
            d = off - n @ y0
            if d > r:
                break  # sorted by distance: no further plane can cut
            continue
        poly, _ = clip_convex_tagged(poly, None, n, off)
        if len(poly) < 3:
            break
    return poly


def centered_section(
    f: PiecewiseAffineConvex,
    y0,
    h: float,
    tol: float = 1e-6,
    max_iters: int = 200,
    box_halfwidth: float | None = None,
) -> CenteredSection:
    """Centred sublevel set of height h: the slicing slope pbar is tuned until
    the sublevel polygon's centroid coincides with y0.

    The update is the damped fixed point pbar <- pbar + lam * H^-1 (centroid -
    y0) with lam = 0.5, where H is the local quadratic model h/2 * Cov^-1 read
    off the current section.
    """
    if h <= 0:
        raise ValueError("section height must be positive")
    y0 = np.asarray(as_point(y0), dtype=float)
    act = f.active_indices(y0)
    pbar = f.gradients[act].mean(axis=0)
    if box_halfwidth is None:
        span = f.gradients.max(axis=0) - f.gradients.min(axis=0)
        box_halfwidth = max(1.0, 200.0 * h / max(1e-9, float(np.hypot(*span))))
    lam = 0.5
    err_prev = np.inf
    for it in range(1, max_iters + 1):
        level = f.value(y0) - pbar @ y0 + h
        bw = box_halfwidth
        for _ in range(40):
            poly = _section_polygon(f, y0, pbar, level, bw)
            if len(poly) >= 3 and (np.abs(poly - y0).max() < 0.98 * bw):
                break
            bw *= 2.0
        if len(poly) < 3:
            raise NoConvergence("section degenerated to empty or lower-dimensional set")
        region = ConvexPolygon(poly)
        cen = np.asarray(region.centroid, dtype=float)
        diam = region.diameter
        err = float(np.hypot(*(cen - y0)))
        if err <= tol * diam:
            bal = _balance_constant(poly, y0)
            sup = _sup_ratio(f, poly, y0, h)
            return CenteredSection(
                center=Point2(*y0),
                height=h,
                shift=Point2(*pbar),
                region=region,
                balance_constant=bal,
                sup_ratio=sup,
                iterations=it,
            )
        cov = region.second_moment()
        m = cov + 1e-12 * np.trace(cov) * np.eye(2)
        # Tilting by dp moves the centroid by ~ (2/h) Cov dp, so the Newton
        # correction for centroid(pbar) = y0 is -(h/2) Cov^-1 (centroid - y0).
        step = -np.linalg.solve(m, cen - y0) * (h / 2.0)
        if err > err_prev * 1.0000001:
            lam *= 0.5
            if lam < 1e-6:
                raise NoConvergence("centroid iteration stalled")
        else:
            lam = min(0.5, lam * 1.25)
        err_prev = err
        pbar = pbar + lam * step
    raise NoConvergence(f"centroid not centred after {max_iters} iterations")


def _balance_constant(poly: np.ndarray, y0: np.ndarray) -> float:
    """Largest c with y0 - c (v - y0) in the section for every vertex v."""
    best = np.inf
    n = len(poly)
    for v in poly:
        d = y0 - v
        if np.hypot(*d) < 1e-15:
            continue
        tmax = np.inf
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            e = b - a
            nx, ny = e[1], -e[0]
            denom = nx * d[0] + ny * d[1]
            num = nx * (a[0] - y0[0]) + ny * (a[1] - y0[1])
            if denom > 1e-15:
                tmax = min(tmax, num / denom)
        best = min(best, tmax)
    return float(max(0.0, best))


def _sup_ratio(f: PiecewiseAffineConvex, poly: np.ndarray, y0: np.ndarray, h: float) -> float:
    """sup over the section of f - (supporting affine at y0), relative to h.

    The supporting slope is the centroid of the active gradients, a canonical
    subgradient choice that keeps the constant comparable across base points.
    """
    act = f.active_indices(y0)
    p0 = f.gradients[act].mean(axis=0)
    w = f.values(poly) - f.value(y0) - (poly - y0) @ p0
    return float(w.max() / h)
