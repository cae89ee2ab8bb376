"""Semi-discrete complete optimal transport.

Discretizes the target into weighted sites and runs a damped Newton iteration
on the Kantorovich dual until every Laguerre cell of the source carries its
prescribed mass.  Cells are power cells: with all weights equal the diagram is
the Voronoi diagram of the sites.

Per-cell clipping and mass evaluation are pure functions of (sites, weights);
the Newton loop is a single-threaded orchestrator and all published values
are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from . import _powercell as pc
from .geometry import (
    ConvexPolygon,
    Location,
    Point2,
    Polygon,
    Segment,
    is_convex_polygon,
    point_location,
    polygon_area,
    triangulate,
)
from .potential import PiecewiseAffineConvex


class OTSolveError(Exception):
    pass


class DuplicateSites(OTSolveError):
    pass


class NonConvexSource(OTSolveError):
    pass


class NewtonStall(OTSolveError):
    pass


class EmptyCellUnrecoverable(OTSolveError):
    pass


DAMPING_FLOOR = 2.0**-30


def _contains_many(poly: Polygon, pts: np.ndarray) -> np.ndarray:
    """Vectorized even-odd containment test (boundary not included)."""
    c = poly.coords
    x, y = pts[:, 0:1], pts[:, 1:2]
    vx, vy = c[:, 0], c[:, 1]
    wx, wy = np.roll(vx, -1), np.roll(vy, -1)
    cond = (vy <= y) != (wy <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = vx + (y - vy) * (wx - vx) / np.where(wy == vy, np.inf, wy - vy)
    return (cond & (x < xint)).sum(axis=1) % 2 == 1


def _affine_intercepts(sites: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Power cell of (y, w) is the linearity cell of the piece y.x + (w-|y|^2)/2.
    return 0.5 * (weights - (sites * sites).sum(axis=1))


@dataclass(frozen=True, eq=False)
class SemiDiscreteProblem:
    source: Polygon
    sites: np.ndarray
    masses: np.ndarray
    target_polygon: Polygon

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float).reshape(-1, 2)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(sites) != len(masses) or len(sites) == 0:
            raise OTSolveError("sites/masses length mismatch or empty")
        if (masses <= 0).any():
            raise OTSolveError("masses must be strictly positive")
        area = polygon_area(self.source)
        if abs(masses.sum() - area) > 1e-9 * area:
            raise OTSolveError(
                f"masses sum {masses.sum():.12g} != source area {area:.12g}"
            )
        for s in sites:
            if point_location(self.target_polygon, s) is Location.OUTSIDE:
                raise OTSolveError(f"site {tuple(s)} outside target closure")
        sites = sites.copy()
        masses = masses.copy()
        sites.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "masses", masses)

    @property
    def n(self) -> int:
        return len(self.sites)


@dataclass(frozen=True, eq=False)
class LaguerreDiagram:
    cells: list[ConvexPolygon]
    weights: np.ndarray
    adjacency: list[tuple[int, int, Segment]]
    sites: np.ndarray
    areas: np.ndarray


class MapResult(NamedTuple):
    point: Point2
    index: int
    ambiguous: bool


@dataclass(frozen=True, eq=False)
class BrenierPotential:
    """u(x) = max_j (x . y_j - (|y_j|^2 - w_j)/2); Du = y_j on cell j."""

    func: PiecewiseAffineConvex
    problem: SemiDiscreteProblem
    weights: np.ndarray

    @staticmethod
    def from_weights(problem: SemiDiscreteProblem, weights: np.ndarray) -> "BrenierPotential":
        f = PiecewiseAffineConvex(
            problem.sites, _affine_intercepts(problem.sites, weights), prune=False
        )
        return BrenierPotential(func=f, problem=problem, weights=np.asarray(weights, float))


def map_point(potential: BrenierPotential, x) -> MapResult:
    """Transport map at x: gradient of the active piece.

    Ties (x on a Laguerre edge) resolve to the lowest active site index and
    set the ambiguity flag.
    """
    vals = potential.func.piece_values(x)
    m = vals.max()
    act = np.flatnonzero(vals >= m - 1e-9 * (1.0 + abs(m)))
    j = int(act[0])
    return MapResult(Point2(*potential.func.gradients[j]), j, len(act) > 1)


def _raw_diagram(sites, weights, domain_coords, neighbors=None):
    cells, tags = pc.power_cells(
        sites, _affine_intercepts(sites, weights), domain_coords, neighbors=neighbors
    )
    return cells, tags, pc.cell_areas(cells)


def _adjacency_from_tags(cells, tags, tol=1e-9):
    adj: list[tuple[int, int, Segment]] = []
    for i, (cell, ctags) in enumerate(zip(cells, tags)):
        m = len(cell)
        if m < 2:
            continue
        for k in range(m):
            j = ctags[k]
            if j < 0 or j <= i:
                continue
            a, b = cell[k], cell[(k + 1) % m]
            if np.hypot(b[0] - a[0], b[1] - a[1]) > tol:
                adj.append((i, int(j), Segment(Point2(*a), Point2(*b))))
    return adj


def build_laguerre(sites, weights, source: Polygon, tol: float = 1e-9) -> LaguerreDiagram:
    """Power diagram of (sites, weights) clipped to a convex source polygon."""
    sites = np.asarray(sites, dtype=float).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if len(sites) > 1:
        d, _ = cKDTree(sites).query(sites, k=2)
        if d[:, 1].min() < 1e-12:
            raise DuplicateSites("two sites coincide")
    if not is_convex_polygon(source):
        raise NonConvexSource("Laguerre construction requires a convex source polygon")
    cells, tags, areas = _raw_diagram(sites, weights, source.coords)
    return LaguerreDiagram(
        cells=[ConvexPolygon(c) for c in cells],
        weights=weights.copy(),
        adjacency=_adjacency_from_tags(cells, tags, tol),
        sites=sites.copy(),
        areas=areas,
    )


def cell_masses(diag: LaguerreDiagram) -> np.ndarray:
    return diag.areas.copy()


def dual_objective(problem: SemiDiscreteProblem, weights: np.ndarray) -> float:
    """Kantorovich dual: sum_j lambda_j w_j + int_Omega min_j (|x-y_j|^2 - w_j)."""
    sites = problem.sites
    cells, _, areas = _raw_diagram(sites, np.asarray(weights, float), problem.source.coords)
    total = float(np.dot(problem.masses, weights))
    for j, cell in enumerate(cells):
        if len(cell) < 3:
            continue
        poly = ConvexPolygon(cell)
        c = np.asarray(poly.centroid)
        second = float(np.trace(poly.second_moment()))
        dy = c - sites[j]
        total += areas[j] * (dy @ dy + second - weights[j])
    return total


def _hessian(adjacency, sites, n):
    """Jacobian of cell masses in the weights: a weighted graph Laplacian / 2."""
    if not adjacency:
        return sparse.csr_matrix((n, n))
    rows, cols, vals = [], [], []
    for i, j, seg in adjacency:
        d = np.hypot(*(sites[j] - sites[i]))
        h = seg.length / (2.0 * d)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-h, -h, h, h]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _initial_weights(problem: SemiDiscreteProblem) -> np.ndarray:
    """Zero weights (Voronoi) unless some cell misses the source entirely;
    then shrink the diagram toward the source centroid until all cells load."""
    n = problem.n
    w = np.zeros(n)
    src = problem.source.coords
    _, _, areas = _raw_diagram(problem.sites, w, src)
    if (areas > 0).all():
        return w
    q = np.asarray(ConvexPolygon(src).centroid)
    r = 1.0
    d2 = ((problem.sites - q) ** 2).sum(axis=1)
    for _ in range(60):
        r *= 0.5
        w = (1.0 - r) * d2
        w = w - w.mean()
        _, _, areas = _raw_diagram(problem.sites, w, src)
        if (areas > 0).all():
            return w
    raise EmptyCellUnrecoverable("no initial weights with all cells loaded")


def solve_weights(
    problem: SemiDiscreteProblem,
    tol: float = 1e-7,
    max_iters: int = 60,
    trace: list | None = None,
) -> tuple[np.ndarray, LaguerreDiagram, BrenierPotential]:
    """Damped Newton on the dual: Hessian is the edge-weighted adjacency
    Laplacian; steps are halved until every cell keeps positive area and the
    residual contracts.  Weights are gauge-fixed to zero mean.

    Raises NewtonStall past max_iters and EmptyCellUnrecoverable when damping
    reaches the floor 2^-30.  When ``trace`` is a list, one record per
    accepted iterate is appended (for diagnostics and property tests).
    """
    if not is_convex_polygon(problem.source):
        raise NonConvexSource("solver requires a convex source polygon")
    sites = problem.sites
    lam = problem.masses
    area = polygon_area(problem.source)
    src = problem.source.coords
    n = problem.n

    w = _initial_weights(problem)
    cells, tags, masses = _raw_diagram(sites, w, src)
    eps_floor = 0.5 * min(float(lam.min()), float(masses.min()))
    res = masses - lam
    if trace is not None:
        trace.append({"weights": w.copy(), "masses": masses.copy(), "step": 0.0})

    for it in range(max_iters):
        if np.abs(res).max() <= tol * area:
            diag = LaguerreDiagram(
                cells=[ConvexPolygon(c) for c in cells],
                weights=w.copy(),
                adjacency=_adjacency_from_tags(cells, tags),
                sites=sites.copy(),
                areas=masses,
            )
            pot = BrenierPotential.from_weights(problem, w)
            return w, diag, pot
        adj = _adjacency_from_tags(cells, tags)
        H = _hessian(adj, sites, n)
        # One weight pinned: the Laplacian kernel is the constant vector.
        delta = np.zeros(n)
        if n > 1:
            Hr = H[1:, 1:].tocsc()
            delta[1:] = spsolve(Hr + 1e-14 * sparse.eye(n - 1), -res[1:])
        norm0 = np.abs(res).sum()
        t = 1.0
        while True:
            w_try = w + t * delta
            w_try = w_try - w_try.mean()
            cells_t, tags_t, masses_t = _raw_diagram(sites, w_try, src)
            res_t = masses_t - lam
            if masses_t.min() >= eps_floor and np.abs(res_t).sum() <= (1 - t / 2) * norm0:
                w, cells, tags, masses, res = w_try, cells_t, tags_t, masses_t, res_t
                break
            t *= 0.5
            if t < DAMPING_FLOOR:
                raise EmptyCellUnrecoverable("damping floor reached without progress")
        if trace is not None:
            trace.append({"weights": w.copy(), "masses": masses.copy(), "step": t})
    raise NewtonStall(f"no convergence to {tol:g} within {max_iters} iterations")


def sample_target(
    target: Polygon,
    n: int,
    seed: int,
    lloyd_iters: int = 20,
    total_mass: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Quantize the target: n interior sites with Lloyd-relaxed positions and
    masses proportional to the exact Voronoi-in-target cell areas, rescaled to
    total_mass (target area by default).  Deterministic for a given seed.
    """
    if n < 1:
        raise OTSolveError("need at least one site")
    rng = np.random.default_rng(seed)
    lo = target.coords.min(axis=0)
    hi = target.coords.max(axis=0)
    area_t = polygon_area(target)

    def draw(k: int) -> np.ndarray:
        out = []
        got = 0
        while got < k:
            batch = rng.uniform(lo, hi, size=(max(4 * (k - got), 64), 2))
            keep = batch[_contains_many(target, batch)]
            out.append(keep)
            got += len(keep)
        return np.vstack(out)[:k]

    sites = draw(n)
    cloud = draw(min(max(40 * n, 4000), 400_000))

    for _ in range(max(0, lloyd_iters)):
        _, owner = cKDTree(sites).query(cloud)
        sums = np.zeros((n, 2))
        counts = np.bincount(owner, minlength=n).astype(float)
        np.add.at(sums, owner, cloud)
        nonempty = counts > 0
        new_sites = sites.copy()
        new_sites[nonempty] = sums[nonempty] / counts[nonempty, None]
        bad = ~_contains_many(target, new_sites)
        if bad.any():
            # Centroid fell outside a non-convex pocket: snap to the nearest
            # owned cloud point instead.
            for i in np.flatnonzero(bad):
                mine = cloud[owner == i]
                if len(mine):
                    k = np.argmin(((mine - new_sites[i]) ** 2).sum(axis=1))
                    new_sites[i] = mine[k]
                else:
                    new_sites[i] = sites[i]
        sites = new_sites

    # Nudge boundary-touching sites inward (toward their owned mass).
    diam = target.diameter
    near_bd = [
        i
        for i in range(n)
        if point_location(target, sites[i], 1e-9 * diam) is not Location.INSIDE
    ]
    if near_bd:
        _, owner = cKDTree(sites).query(cloud)
        for i in near_bd:
            mine = cloud[owner == i]
            anchor = mine.mean(axis=0) if len(mine) else np.asarray(
                ConvexPolygon(target.coords).centroid
            )
            d = anchor - sites[i]
            nd = np.hypot(*d)
            if nd > 0:
                sites[i] = sites[i] + (1e-9 * diam / nd) * d
            if point_location(target, sites[i], 1e-12) is not Location.INSIDE and len(mine):
                sites[i] = mine[np.argmin(((mine - sites[i]) ** 2).sum(axis=1))]

    masses = _voronoi_in_target_areas(sites, target)
    scale = (total_mass if total_mass is not None else area_t) / masses.sum()
    return sites, masses * scale


def _voronoi_in_target_areas(sites: np.ndarray, target: Polygon) -> np.ndarray:
    n = len(sites)
    intercepts = _affine_intercepts(sites, np.zeros(n))
    tris = pc.regular_triangulation(sites, intercepts) if n > 2 else None
    neighbors = pc.neighbor_lists(n, tris)
    areas = np.zeros(n)
    patches = [target.coords] if is_convex_polygon(target) else triangulate(target)
    for patch in patches:
        cells, _ = pc.power_cells(
            sites, intercepts, np.asarray(patch, float), neighbors=neighbors
        )
        areas += pc.cell_areas(cells)
    return areas


def make_problem(
    source: Polygon,
    target: Polygon,
    n: int,
    seed: int,
    lloyd_iters: int = 20,
) -> SemiDiscreteProblem:
    """Sample the target and package a mass-balanced semi-discrete problem."""
    sites, masses = sample_target(
        target, n, seed, lloyd_iters, total_mass=polygon_area(source)
    )
    return SemiDiscreteProblem(
        source=source, sites=sites, masses=masses, target_polygon=target
    )
