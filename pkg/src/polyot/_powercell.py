"""Internal power-cell machinery shared by the convex kernel and the solver.

A max-affine function f(x) = max_j (g_j . x + c_j) induces a polyhedral
subdivision of the plane whose cells are power cells.  The combinatorics come
from the lower convex hull of the lifted points (g_j, -2 c_j); facets of that
hull are dual to subdivision vertices.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import clip_convex_tagged

ALL_PAIRS_MAX = 48


def _lower_facets(points3: np.ndarray) -> np.ndarray:
    hull = ConvexHull(points3, qhull_options="Qt")
    down = hull.equations[:, 2] < -1e-12
    return hull.simplices[down]


def regular_triangulation(gradients: np.ndarray, intercepts: np.ndarray):
    """Triangles (index triples) of the regular subdivision, or None if degenerate.

    A piece absent from every triangle is hidden (its cell is empty) unless
    the whole configuration is lower-dimensional.
    """
    n = len(gradients)
    if n < 3:
        return None
    lifted = np.c_[gradients, -2.0 * intercepts]
    try:
        tris = _lower_facets(lifted)
    except QhullError:
        return None
    if len(tris) == 0:
        return None
    # Orient triangles CCW in the plane for downstream area formulas.
    a, b, c = (gradients[tris[:, k]] for k in range(3))
    s = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = s < 0
    tris = tris.copy()
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    return tris


def neighbor_lists(n: int, tris: np.ndarray | None) -> list[np.ndarray]:
    """Per-piece clipping candidates; falls back to all pairs when degenerate."""
    if tris is None:
        return [np.array([j for j in range(n) if j != i], dtype=int) for i in range(n)]
    nbr: list[set] = [set() for _ in range(n)]
    for i0, i1, i2 in tris:
        nbr[i0].update((i1, i2))
        nbr[i1].update((i0, i2))
        nbr[i2].update((i0, i1))
    return [np.array(sorted(s), dtype=int) for s in nbr]


def dual_vertices(gradients: np.ndarray, intercepts: np.ndarray, tris: np.ndarray):
    """Subdivision vertex dual to each triangle: the point where all three tie."""
    ga, gb, gc = (gradients[tris[:, k]] for k in range(3))
    ca, cb, cc = (intercepts[tris[:, k]] for k in range(3))
    # Solve x.(ga-gb) = cb-ca and x.(ga-gc) = cc-ca per triangle.
    a11, a12 = ga[:, 0] - gb[:, 0], ga[:, 1] - gb[:, 1]
    a21, a22 = ga[:, 0] - gc[:, 0], ga[:, 1] - gc[:, 1]
    r1, r2 = cb - ca, cc - ca
    det = a11 * a22 - a12 * a21
    det = np.where(np.abs(det) < 1e-300, np.nan, det)
    x = (r1 * a22 - r2 * a12) / det
    y = (a11 * r2 - a21 * r1) / det
    return np.c_[x, y]


def ma_atoms(gradients: np.ndarray, intercepts: np.ndarray):
    """Monge-Ampere atoms: (locations, masses) of the 2-D subdifferential images.

    Each triangle of the regular subdivision contributes its gradient-space
    area at its dual vertex; 1-D and 0-D images carry no mass.
    """
    tris = regular_triangulation(gradients, intercepts)
    if tris is None:
        return np.empty((0, 2)), np.empty(0)
    verts = dual_vertices(gradients, intercepts, tris)
    ga, gb, gc = (gradients[tris[:, k]] for k in range(3))
    areas = 0.5 * np.abs(
        (gb[:, 0] - ga[:, 0]) * (gc[:, 1] - ga[:, 1])
        - (gb[:, 1] - ga[:, 1]) * (gc[:, 0] - ga[:, 0])
    )
    ok = np.isfinite(verts).all(axis=1)
    return verts[ok], areas[ok]


def power_cells(
    gradients: np.ndarray,
    intercepts: np.ndarray,
    domain_coords: np.ndarray,
    tol: float = 1e-12,
    neighbors: list[np.ndarray] | None = None,
):
    """Clip every piece's linearity cell to a convex domain polygon.

    Returns (cells, tags): per piece, the CCW vertex array of
    cell_i = domain ∩ {x : g_i.x + c_i >= g_j.x + c_j  for all j}
    and per-edge tags (neighbour index j for bisector edges, -1 for domain
    boundary edges).  Hidden pieces yield empty cells.
    """
    g = np.asarray(gradients, dtype=float)
    c = np.asarray(intercepts, dtype=float)
    n = len(g)
    hidden = np.zeros(n, dtype=bool)
    if neighbors is None:
        tris = regular_triangulation(g, c) if n > ALL_PAIRS_MAX else None
        if n > ALL_PAIRS_MAX and tris is None:
            raise ValueError("degenerate piece configuration too large for all-pairs clipping")
        neighbors = neighbor_lists(n, tris)
        if tris is not None:
            hidden[:] = True
            hidden[np.unique(tris)] = False
    else:
        hidden = np.array([nb is None for nb in neighbors], dtype=bool)
    base_tags = [-1] * len(domain_coords)
    cells: list[np.ndarray] = []
    tags: list[list[int]] = []
    empty = np.empty((0, 2))
    for i in range(n):
        if hidden[i]:
            cells.append(empty)
            tags.append([])
            continue
        poly = domain_coords
        ptags = base_tags
        gi, ci = g[i], c[i]
        for j in neighbors[i]:
            d = g[j] - gi
            nrm = np.hypot(d[0], d[1])
            if nrm < 1e-300:
                continue
            poly, ptags = clip_convex_tagged(
                poly, ptags, (d[0] / nrm, d[1] / nrm), (ci - c[j]) / nrm, new_tag=int(j), eps=tol
            )
            if len(poly) == 0:
                break
        cells.append(poly)
        tags.append(ptags if ptags is not None else [])
    return cells, tags


def cell_areas(cells: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(len(cells))
    for i, cell in enumerate(cells):
        if len(cell) >= 3:
            x, y = cell[:, 0], cell[:, 1]
            out[i] = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return out


def subdivision_vertices(gradients, intercepts, dedupe_tol: float = 1e-9):
    """All points where at least three pieces of the max tie (may be empty)."""
    tris = regular_triangulation(np.asarray(gradients, float), np.asarray(intercepts, float))
    if tris is None:
        return np.empty((0, 2))
    verts = dual_vertices(np.asarray(gradients, float), np.asarray(intercepts, float), tris)
    verts = verts[np.isfinite(verts).all(axis=1)]
    if len(verts) == 0:
        return verts
    key = np.round(verts / dedupe_tol).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    return verts[np.sort(idx)]
