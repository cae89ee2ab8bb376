"""Optimal partial transport across a separating line.

The plan is computed as an exact integer min-cost flow between quantized
source and target clouds with slack absorbed at the super nodes, so marginal
feasibility and optimality certificates are exact.  The active region, free
boundary polyline and its contact classification against the target boundary
come out of the converged plan.

Cost assembly and the geometric checks are pure; the flow solver itself is
single-threaded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from ._mincostflow import min_cost_partial_flow, reduced_cost_certificate
from .geometry import (
    ConvexPolygon,
    Location,
    Point2,
    Polygon,
    convex_hull,
    point_location,
    polygon_area,
)
from .otsolve import sample_target
from .singular import _hull_segment_distance, _point_hull_distance, median_site_spacing

COST_SCALE = 1e12
MASS_BITS = 2**40

F1 = "F1"
F2 = "F2"
F3 = "F3"


class PartialError(Exception):
    pass


class NotSeparated(PartialError):
    pass


class InfeasibleMass(PartialError):
    pass


class EmptyBoundary(PartialError):
    pass


class TooFewSamples(PartialError):
    pass


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(2), np.zeros(2))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, float) @ self.rotation.T + self.translation

    def invert(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, float) - self.translation) @ self.rotation

    def apply_polygon(self, poly: Polygon) -> Polygon:
        return Polygon(self.apply(poly.coords))

    @property
    def is_identity(self) -> bool:
        return np.allclose(self.rotation, np.eye(2)) and np.allclose(self.translation, 0)


@dataclass(frozen=True, eq=False)
class PartialProblem:
    """Mass m moved from the source (left of the line) to the target (right)."""

    source: Polygon
    target: Polygon
    mass: float

    def __post_init__(self):
        lim = min(polygon_area(self.source), polygon_area(self.target))
        if not 0 < self.mass <= lim:
            raise InfeasibleMass(f"mass {self.mass} outside (0, {lim}]")

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "mass": float(self.mass),
        }

    @staticmethod
    def from_json(obj: dict) -> "PartialProblem":
        return PartialProblem(
            source=Polygon.from_json(obj["source"]),
            target=Polygon.from_json(obj["target"]),
            mass=float(obj["mass"]),
        )


@dataclass(frozen=True, eq=False)
class DiscretePlan:
    source_points: np.ndarray
    source_weights: np.ndarray
    target_points: np.ndarray
    target_weights: np.ndarray
    couplings: np.ndarray  # rows (i, j, mass)

    @property
    def total_mass(self) -> float:
        return float(self.couplings[:, 2].sum()) if len(self.couplings) else 0.0

    def cost(self) -> float:
        if not len(self.couplings):
            return 0.0
        i = self.couplings[:, 0].astype(int)
        j = self.couplings[:, 1].astype(int)
        d2 = ((self.source_points[i] - self.target_points[j]) ** 2).sum(axis=1)
        return float((self.couplings[:, 2] * d2).sum())


@dataclass(frozen=True)
class FBClass:
    tag: str
    touched_vertices: tuple[int, ...]
    touched_edges: tuple[int, ...]
    location: Point2


@dataclass(eq=False)
class PartialSolution:
    problem: PartialProblem
    transform: RigidTransform
    plan: DiscretePlan
    flow: np.ndarray  # integer flow matrix
    potentials: np.ndarray  # integer node potentials from the flow solver
    mass_scale: float
    source_fraction: np.ndarray
    target_fraction: np.ndarray
    active_source: np.ndarray
    active_target: np.ndarray
    band_source: np.ndarray
    free_boundary: np.ndarray
    fb_components: list[np.ndarray]
    fb_classes: list[FBClass] = field(default_factory=list)
    stay_put_residual: float = 0.0

    @property
    def source_spacing(self) -> float:
        return median_site_spacing(self.plan.source_points)

    @property
    def target_spacing(self) -> float:
        return median_site_spacing(self.plan.target_points)

    def barycenter_map(self) -> tuple[np.ndarray, np.ndarray]:
        """Active source samples and their coupled-mass barycenters."""
        sent = self.flow.sum(axis=1).astype(float)
        rows = np.flatnonzero(sent > 0)
        bary = (self.flow[rows].astype(float) @ self.plan.target_points) / sent[rows, None]
        return rows, bary


def _hulls_intersect(a: ConvexPolygon, b: ConvexPolygon) -> bool:
    from .geometry import _segments_properly_intersect

    ca, cb = a.coords, b.coords
    for p in ca:
        if _point_hull_distance(p, b) == 0.0:
            return True
    for p in cb:
        if _point_hull_distance(p, a) == 0.0:
            return True
    na, nb = len(ca), len(cb)
    for i in range(na):
        for j in range(nb):
            if _segments_properly_intersect(
                ca[i], ca[(i + 1) % na], cb[j], cb[(j + 1) % nb]
            ):
                return True
    return False


def _closest_pair(a: ConvexPolygon, b: ConvexPolygon) -> tuple[np.ndarray, np.ndarray, float]:
    def seg_point(p, q, x):
        d = q - p
        t = np.clip(((x - p) @ d) / max(1e-300, d @ d), 0.0, 1.0)
        return p + t * d

    best = (None, None, np.inf)
    ca, cb = a.coords, b.coords
    na, nb = len(ca), len(cb)
    for i in range(na):
        p = ca[i]
        q = ca[(i + 1) % na] if na > 1 else ca[i]
        for x in cb:
            y = seg_point(p, q, x)
            d = np.hypot(*(x - y))
            if d < best[2]:
                best = (y, x, d)
    for j in range(nb):
        p = cb[j]
        q = cb[(j + 1) % nb] if nb > 1 else cb[j]
        for x in ca:
            y = seg_point(p, q, x)
            d = np.hypot(*(y - x))
            if d < best[2]:
                best = (x, y, d)
    return best


def check_separation(problem: PartialProblem) -> tuple[PartialProblem, RigidTransform]:
    """Normalize coordinates so the separating line is {x1 = 0} with the
    source on the left; raises NotSeparated when the hulls meet.

    Already-normalized problems pass through with the identity transform.
    """
    if problem.source.coords[:, 0].max() < 0 < problem.target.coords[:, 0].min():
        return problem, RigidTransform.identity()
    hull_s = convex_hull(problem.source.coords)
    hull_t = convex_hull(problem.target.coords)
    if _hulls_intersect(hull_s, hull_t):
        raise NotSeparated("convex hulls of source and target intersect")
    p, q, d = _closest_pair(hull_s, hull_t)
    if d <= 1e-12:
        raise NotSeparated("domains touch")
    n = (q - p) / d
    rot = np.array([[n[0], n[1]], [-n[1], n[0]]])
    mid = 0.5 * (p + q)
    tr = RigidTransform(rot, -rot @ mid)
    return (
        PartialProblem(
            source=tr.apply_polygon(problem.source),
            target=tr.apply_polygon(problem.target),
            mass=problem.mass,
        ),
        tr,
    )


def solve_partial(
    problem: PartialProblem,
    n: int,
    seed: int,
    lloyd_iters: int = 8,
) -> PartialSolution:
    """Exact discrete partial plan for mass m on quantized clouds.

    Active sets threshold the transported fraction at 1/2; samples with
    fraction in (0.01, 0.99) are flagged as the boundary band.  The stay-put
    residual measures the spread of the dual potential over inactive samples
    (the discrete form of the quadratic stay-put identity, with the constant
    fitted by the median).
    """
    norm, tr = check_separation(problem)
    a_src = polygon_area(norm.source)
    a_tgt = polygon_area(norm.target)
    ns = int(n)
    nt = max(1, int(round(n * a_tgt / a_src)))
    src_pts, _ = sample_target(norm.source, ns, seed, lloyd_iters, total_mass=a_src)
    tgt_pts, _ = sample_target(
        norm.target, nt, seed + 1_000_003, lloyd_iters, total_mass=a_tgt
    )
    # Equal-mass quantization on both sides: one integer unit per sample keeps
    # every flow bottleneck a whole unit, so augmentations stay near-linear.
    unit = np.int64(2**30)
    src_w = np.full(ns, a_src / ns)
    tgt_w = np.full(nt, a_src / ns)  # same unit as the source samples
    mscale = ns * float(unit) / a_src
    A = np.full(ns, unit, dtype=np.int64)
    B = np.full(nt, unit, dtype=np.int64)
    K = int(min(round(problem.mass * mscale), A.sum(), B.sum()))
    d2 = ((src_pts[:, None, :] - tgt_pts[None, :, :]) ** 2).sum(axis=2)
    cost = np.round(d2 * COST_SCALE).astype(np.int64)

    F, pot, status = min_cost_partial_flow(cost, A, B, K)
    if status != 0:
        raise InfeasibleMass("flow solver could not route the requested mass")
    if not reduced_cost_certificate(cost, F, pot, A, B):
        raise PartialError("optimality certificate failed (internal error)")

    sent = F.sum(axis=1)
    filled = F.sum(axis=0)
    frac_s = sent / A
    frac_t = filled / B
    active_s = frac_s >= 0.5
    active_t = frac_t >= 0.5
    band_s = (frac_s > 0.01) & (frac_s < 0.99)

    ii, jj = np.nonzero(F)
    couplings = np.c_[ii.astype(float), jj.astype(float), F[ii, jj] / mscale]
    plan = DiscretePlan(
        source_points=src_pts,
        source_weights=src_w,
        target_points=tgt_pts,
        target_weights=tgt_w,
        couplings=couplings,
    )

    inactive = ~active_s
    if inactive.any():
        u = (pot[ns + nt] - pot[:ns]) / COST_SCALE
        vals = u[inactive]
        stay = float(np.abs(vals - np.median(vals)).max())
    else:
        stay = 0.0

    sol = PartialSolution(
        problem=problem,
        transform=tr,
        plan=plan,
        flow=F,
        potentials=pot,
        mass_scale=mscale,
        source_fraction=frac_s,
        target_fraction=frac_t,
        active_source=active_s,
        active_target=active_t,
        band_source=band_s,
        free_boundary=np.empty((0, 2)),
        fb_components=[],
        stay_put_residual=stay,
    )
    try:
        comps = extract_free_boundary(sol)
        sol.fb_components = comps
        sol.free_boundary = max(comps, key=len)
    except EmptyBoundary:
        pass
    if len(sol.free_boundary):
        sol.fb_classes = classify_fb_points(sol)[0]
    return sol


def extract_free_boundary(sol: PartialSolution, h: float | None = None) -> list[np.ndarray]:
    """March the active/inactive interface over the Delaunay graph of the
    source samples; returns polyline components sorted by length.

    Midpoints of cut edges chain triangle by triangle; vertices falling
    outside the source polygon are dropped (the interface is only claimed
    inside the domain).
    """
    pts = sol.plan.source_points
    active = sol.active_source
    if active.all() or not active.any():
        raise EmptyBoundary("no active/inactive interface to trace")
    tri = Delaunay(pts)
    src = check_separation(sol.problem)[0].source
    h = median_site_spacing(pts)

    mid_id: dict[tuple[int, int], int] = {}
    midpoints: list[np.ndarray] = []
    links: dict[int, set[int]] = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in mid_id:
            mid_id[key] = len(midpoints)
            midpoints.append(0.5 * (pts[a] + pts[b]))
        return mid_id[key]

    def circumradius(tri_pts: np.ndarray) -> float:
        a = np.hypot(*(tri_pts[1] - tri_pts[0]))
        b = np.hypot(*(tri_pts[2] - tri_pts[1]))
        c = np.hypot(*(tri_pts[0] - tri_pts[2]))
        area2 = abs(
            (tri_pts[1][0] - tri_pts[0][0]) * (tri_pts[2][1] - tri_pts[0][1])
            - (tri_pts[1][1] - tri_pts[0][1]) * (tri_pts[2][0] - tri_pts[0][0])
        )
        return a * b * c / max(1e-300, 2 * area2)

    from .geometry import distance_to_boundary

    for simplex in tri.simplices:
        # Alpha filter: boundary slivers would bridge distant samples.
        if circumradius(pts[simplex]) > 2.0 * h:
            continue
        cut = [
            (a, b)
            for a, b in ((simplex[0], simplex[1]), (simplex[1], simplex[2]), (simplex[0], simplex[2]))
            if active[a] != active[b]
        ]
        if len(cut) != 2:
            continue
        u = midpoint(*cut[0])
        v = midpoint(*cut[1])
        if distance_to_boundary(src, midpoints[u]) < 0.75 * h:
            continue
        if distance_to_boundary(src, midpoints[v]) < 0.75 * h:
            continue
        links.setdefault(u, set()).add(v)
        links.setdefault(v, set()).add(u)

    if not links:
        raise EmptyBoundary("interface produced no crossings")

    seen: set[int] = set()
    comps: list[np.ndarray] = []
    starts = sorted(links, key=lambda k: (len(links[k]), k))
    for s in starts:
        if s in seen or len(links[s]) == 2:
            continue
        path = [s]
        seen.add(s)
        cur = s
        while True:
            nxt = [v for v in links[cur] if v not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            path.append(cur)
        comps.append(np.array([midpoints[k] for k in path]))
    for s in sorted(links):  # leftover cycles
        if s in seen:
            continue
        path = [s]
        seen.add(s)
        cur = s
        while True:
            nxt = [v for v in links[cur] if v not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            path.append(cur)
        comps.append(np.array([midpoints[k] for k in path]))

    kept = []
    for comp in comps:
        inside = np.array(
            [point_location(src, p, 1e-12) is not Location.OUTSIDE for p in comp]
        )
        comp = comp[inside]
        if len(comp) >= 2:
            kept.append(comp)
    if not kept:
        raise EmptyBoundary("interface collapsed after clipping")
    return sorted(kept, key=len, reverse=True)


def graph_over_L_check(fb: np.ndarray, min_separation: float = 0.0) -> tuple[int, float]:
    """Sweep horizontal lines: crossing multiplicity and max secant slope
    |dx1/dx2| of the polyline viewed as a graph over the separating line.

    Crossings closer than min_separation merge into one cluster counted by
    parity, so sub-resolution bumps of the marched interface do not register
    as genuine multiplicity (pass the sampling spacing for converged plans).
    """
    fb = np.asarray(fb, float)
    if len(fb) < 2:
        raise PartialError("empty polyline")
    ys = np.unique(fb[:, 1])
    sweeps = 0.5 * (ys[:-1] + ys[1:])
    max_mult = 0
    for c in sweeps:
        xs = []
        for k in range(len(fb) - 1):
            y0, y1 = fb[k, 1], fb[k + 1, 1]
            if (y0 - c) * (y1 - c) < 0:
                t = (c - y0) / (y1 - y0)
                xs.append(fb[k, 0] + t * (fb[k + 1, 0] - fb[k, 0]))
        if not xs:
            continue
        xs.sort()
        mult = 0
        run = 1
        for a, b in zip(xs[:-1], xs[1:]):
            if b - a > min_separation:
                mult += run % 2
                run = 1
            else:
                run += 1
        mult += run % 2
        max_mult = max(max_mult, mult)
    dx = np.abs(np.diff(fb[:, 0]))
    dy = np.abs(np.diff(fb[:, 1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(dy > 0, dx / np.where(dy > 0, dy, 1.0), np.where(dx > 0, np.inf, 0.0))
    return max_mult, float(slopes.max()) if len(slopes) else 0.0


def interior_ball_check(sol: PartialSolution, tol: float | None = None) -> int:
    """Sampled interior-ball inclusions for every coupled pair.

    For a coupling (x, y): grid points of B_{|x-y|}(x) ∩ target must be
    active target mass, and of B_{|x-y|}(y) ∩ source active source mass.
    Grid pitch and the shrink margin are both 2x the sampling spacing.
    """
    norm = check_separation(sol.problem)[0]
    violations = 0
    pairs = np.nonzero(sol.flow)
    h_s = sol.source_spacing
    h_t = sol.target_spacing
    if tol is None:
        tol = 2.0 * max(h_s, h_t)
    t_tree = cKDTree(sol.plan.target_points)
    s_tree = cKDTree(sol.plan.source_points)

    def count_side(center, radius, poly, tree, active, margin, near):
        nonlocal violations
        r_eff = radius - margin
        if r_eff <= 0:
            return
        g = np.arange(center[0] - r_eff, center[0] + r_eff + tol / 2, tol)
        gy = np.arange(center[1] - r_eff, center[1] + r_eff + tol / 2, tol)
        if len(g) == 0 or len(gy) == 0:
            return
        gx, gyy = np.meshgrid(g, gy)
        p = np.c_[gx.ravel(), gyy.ravel()]
        p = p[((p - center) ** 2).sum(axis=1) <= r_eff * r_eff]
        if not len(p):
            return
        from .otsolve import _contains_many

        p = p[_contains_many(poly, p)]
        if not len(p):
            return
        d, k = tree.query(p)
        ok = d <= near
        bad = (~active[k]) & ok
        violations += int(bad.sum())

    xs = sol.plan.source_points
    ys = sol.plan.target_points
    for i, j in zip(*pairs):
        x, y = xs[i], ys[j]
        r = float(np.hypot(*(x - y)))
        count_side(x, r, norm.target, t_tree, sol.active_target, 2 * h_t, 1.5 * h_t)
        count_side(y, r, norm.source, s_tree, sol.active_source, 2 * h_s, 1.5 * h_s)
    return violations


def _window_tangents(fb: np.ndarray, window: float) -> np.ndarray:
    """Unit tangents estimated by PCA over a fixed-length arc window."""
    seg = np.hypot(*np.diff(fb, axis=0).T)
    arc = np.r_[0.0, np.cumsum(seg)]
    tangents = np.empty_like(fb)
    for k in range(len(fb)):
        sel = np.abs(arc - arc[k]) <= window / 2
        if sel.sum() < 2:
            sel = slice(max(0, k - 1), min(len(fb), k + 2))
        pts = fb[sel]
        c = pts - pts.mean(axis=0)
        m = c.T @ c
        evals, evecs = np.linalg.eigh(m)
        t = evecs[:, -1]
        tangents[k] = t / np.hypot(*t)
    return tangents


def fb_normal_check(
    sol: PartialSolution,
    window_frac: float = 0.25,
    boundary_margin: float | None = None,
) -> float:
    """Max angle between the polyline normal and the transport direction
    (T(x) - x) read at the nearest active coupled sample.

    Tangents are PCA-smoothed over a window that is a fixed fraction of the
    polyline (the midpoint sawtooth must average out at a physical scale for
    the error to shrink under refinement).  Vertices closer to the domain
    boundary than boundary_margin (default 2.5 sample spacings) are skipped:
    no claim is made where the curve meets the boundary.  Refinement studies
    should pass a fixed margin so every level measures the same region.
    """
    if not len(sol.free_boundary):
        raise EmptyBoundary("no free boundary to check")
    from .geometry import distance_to_boundary

    src = check_separation(sol.problem)[0].source
    fb = sol.free_boundary
    h_s = sol.source_spacing
    if boundary_margin is None:
        boundary_margin = 2.5 * h_s
    seg = np.hypot(*np.diff(fb, axis=0).T)
    window = max(4 * float(np.median(seg)), window_frac * float(seg.sum()))
    tangents = _window_tangents(fb, window)
    rows, bary = sol.barycenter_map()
    eligible = np.array(
        [r for k, r in enumerate(rows) if sol.active_source[r] and not sol.band_source[r]],
        dtype=int,
    )
    if not len(eligible):
        eligible = rows
    pick = {r: k for k, r in enumerate(rows)}
    tree = cKDTree(sol.plan.source_points[eligible])
    worst = 0.0
    measured = 0
    for k, p in enumerate(fb):
        if distance_to_boundary(src, p) < boundary_margin:
            continue
        _, idx = tree.query(p)
        r = eligible[idx]
        d = bary[pick[r]] - sol.plan.source_points[r]
        nd = np.hypot(*d)
        if nd < 1e-14:
            continue
        d = d / nd
        normal = np.array([-tangents[k][1], tangents[k][0]])
        ang = np.arccos(np.clip(abs(normal @ d), 0.0, 1.0))
        worst = max(worst, float(ang))
        measured += 1
    if measured == 0:
        # Curve too short for an interior estimate: fall back to all vertices.
        for k, p in enumerate(fb):
            _, idx = tree.query(p)
            r = eligible[idx]
            d = bary[pick[r]] - sol.plan.source_points[r]
            nd = np.hypot(*d)
            if nd < 1e-14:
                continue
            d = d / nd
            normal = np.array([-tangents[k][1], tangents[k][0]])
            worst = max(worst, float(np.arccos(np.clip(abs(normal @ d), 0.0, 1.0))))
    return worst


def classify_fb_points(
    sol: PartialSolution, target: Polygon | None = None, tol: float | None = None
):
    """Cluster free-boundary vertices and classify each cluster by the target
    features touched by the local dual hull (targets of nearby active mass).

    Returns (classes, counts, bounds): a touched vertex gives F1, two or more
    touched open edges F2, exactly one F3; F1/F2 counts compare against m and
    m(m-1)/2.
    """
    if not len(sol.free_boundary):
        raise EmptyBoundary("no free boundary to classify")
    from .geometry import distance_to_boundary

    norm = check_separation(sol.problem)[0]
    if target is None:
        target = norm.target
    h_s = sol.source_spacing
    h_t = sol.target_spacing
    if tol is None:
        tol = 2.0 * h_t
    fb = np.vstack(sol.fb_components) if sol.fb_components else sol.free_boundary
    # Clusters hugging the domain boundary map toward target vertices even in
    # the continuum; classification is about the interior of the curve.
    interior = np.array([distance_to_boundary(norm.source, p) >= 2.0 * h_s for p in fb])
    if interior.any():
        fb = fb[interior]

    merge = 1.5 * h_s
    centers: list[np.ndarray] = []
    for p in fb:
        if not centers or min(np.hypot(*(p - c)) for c in centers) > merge:
            centers.append(p)

    coupled = np.flatnonzero(sol.flow.sum(axis=1) > 0)
    coupled_tree = cKDTree(sol.plan.source_points[coupled])
    tc = target.coords
    m = len(tc)
    classes: list[FBClass] = []
    for c in centers:
        # Minimal stencil: the few coupled samples adjacent to the vertex,
        # mirroring the incident-cell dual hull of the singular graph.
        k = min(4, len(coupled))
        _, idx = coupled_tree.query(c, k=k)
        near = np.atleast_1d(coupled[idx]).tolist()
        tgt_ids = np.unique(np.concatenate([np.flatnonzero(sol.flow[i] > 0) for i in near]))
        hull = convex_hull(sol.plan.target_points[tgt_ids])
        verts = [i for i in range(m) if _point_hull_distance(tc[i], hull) <= tol]
        edges = []
        for i in range(m):
            a, b = tc[i], tc[(i + 1) % m]
            d, t = _hull_segment_distance(hull, a, b)
            L = np.hypot(*(b - a))
            if d <= tol and t * L > tol and (1 - t) * L > tol:
                edges.append(i)
        if verts:
            tag = F1
        elif len(edges) >= 2:
            tag = F2
        else:
            tag = F3
            if not edges:
                dists = [
                    (_hull_segment_distance(hull, tc[i], tc[(i + 1) % m])[0], i)
                    for i in range(m)
                ]
                edges = [min(dists)[1]]
        classes.append(
            FBClass(
                tag=tag,
                touched_vertices=tuple(verts),
                touched_edges=tuple(edges),
                location=Point2(*c),
            )
        )
    counts = {
        F1: sum(1 for c in classes if c.tag == F1),
        F2: sum(1 for c in classes if c.tag == F2),
        F3: sum(1 for c in classes if c.tag == F3),
    }
    bounds = {F1: m, F2: m * (m - 1) // 2}
    return classes, counts, bounds


def uniform_convexity_probe(sol: PartialSolution, p0, radius: float) -> float:
    """Lower-envelope slope of log|Dv(y) - Dv(y')| against log|y - y'| over
    active target samples near p0 (Dv read from plan barycenters)."""
    p0 = np.asarray(p0, float)
    filled = sol.flow.sum(axis=0).astype(float)
    ids = np.flatnonzero(sol.active_target & (filled > 0))
    if not len(ids):
        raise TooFewSamples("no active target samples")
    pts = sol.plan.target_points[ids]
    keep = np.hypot(*(pts - p0).T) <= radius
    ids = ids[keep]
    if len(ids) * (len(ids) - 1) // 2 < 20:
        raise TooFewSamples(f"{len(ids)} samples near p0 give too few pairs")
    pts = sol.plan.target_points[ids]
    dv = (sol.flow[:, ids].T.astype(float) @ sol.plan.source_points) / filled[ids, None]
    iu, ju = np.triu_indices(len(ids), k=1)
    dy = np.hypot(*(pts[iu] - pts[ju]).T)
    dg = np.hypot(*(dv[iu] - dv[ju]).T)
    ok = (dy > 1e-12) & (dg > 1e-12)
    ldy, ldg = np.log(dy[ok]), np.log(dg[ok])
    bins = np.linspace(ldy.min(), ldy.max() + 1e-9, 9)
    xs, ys = [], []
    for b0, b1 in zip(bins[:-1], bins[1:]):
        sel = (ldy >= b0) & (ldy < b1)
        if sel.any():
            xs.append(0.5 * (b0 + b1))
            ys.append(ldg[sel].min())
    if len(xs) < 3:
        raise TooFewSamples("distance bins too sparse for an envelope fit")
    return float(np.polyfit(xs, ys, 1)[0])
