"""Singular set of the transport potential: extraction and classification.

A Laguerre adjacency edge is singular when its dual segment (between the two
sites) leaves the closed target; such edges are the discrete atoms of the
non-differentiability set.  Nodes inherit a dual hull (all incident sites),
get classified by which target features that hull touches, and chain into
curves through degree-2 nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    ConvexPolygon,
    Location,
    Point2,
    Polygon,
    Segment,
    convex_hull,
    point_location,
    segment_exits,
    segment_polygon_overlap_length,
)
from .otsolve import BrenierPotential, LaguerreDiagram
from .potential import centered_section

SIGMA1 = "Sigma1"
SIGMA2_PRIME = "Sigma2Prime"
SIGMA2_DOUBLE_PRIME = "Sigma2DoublePrime"


class SingularError(Exception):
    pass


class DualEndpointNotOnBoundary(SingularError):
    pass


class SectionEscapedDomain(SingularError):
    pass


@dataclass(frozen=True, eq=False)
class SingularEdge:
    cell_pair: tuple[int, int]
    edge: Segment
    dual: Segment
    normal: Point2


@dataclass(eq=False)
class SingularNode:
    location: Point2
    edge_ids: list[int] = field(default_factory=list)
    site_ids: set[int] = field(default_factory=set)
    dual_hull: ConvexPolygon | None = None
    on_source_boundary: bool = False

    @property
    def degree(self) -> int:
        return len(self.edge_ids)


@dataclass(frozen=True)
class PointClass:
    tag: str
    touched_vertices: tuple[int, ...]
    touched_edges: tuple[int, ...]


@dataclass(eq=False)
class SingularGraph:
    edges: list[SingularEdge]
    nodes: list[SingularNode]
    edge_nodes: list[tuple[int, int]]  # node ids of each edge's (a, b)


@dataclass(frozen=True)
class SingularDiagnostics:
    growth_exponent: float
    density_ratio_min: float
    obliqueness_min: float
    max_turning_angle: float

    def as_dict(self) -> dict:
        return {
            "growth_exponent": self.growth_exponent,
            "density_ratio_min": self.density_ratio_min,
            "obliqueness_min": self.obliqueness_min,
            "max_turning_angle": self.max_turning_angle,
        }


def median_site_spacing(sites: np.ndarray) -> float:
    if len(sites) < 2:
        return float("inf")
    d, _ = cKDTree(sites).query(sites, k=2)
    return float(np.median(d[:, 1]))


def detect_singular_edges(
    diag: LaguerreDiagram, target: Polygon, tol: float = 1e-9
) -> list[SingularEdge]:
    """Adjacency edges whose open dual segment exits the closed target."""
    out: list[SingularEdge] = []
    for i, j, seg in diag.adjacency:
        yi, yj = diag.sites[i], diag.sites[j]
        dual = Segment(Point2(*yi), Point2(*yj))
        if segment_exits(target, dual, tol):
            d = yj - yi
            nrm = np.hypot(*d)
            out.append(
                SingularEdge(
                    cell_pair=(i, j),
                    edge=seg,
                    dual=dual,
                    normal=Point2(d[0] / nrm, d[1] / nrm),
                )
            )
    return out


def build_graph(
    diag: LaguerreDiagram,
    target: Polygon,
    edges: list[SingularEdge] | None = None,
    tol: float = 1e-9,
    source: Polygon | None = None,
) -> SingularGraph:
    """Merge singular-edge endpoints into nodes and attach dual hulls.

    The dual hull of a node is the convex hull of the sites of every cell
    incident to that Laguerre vertex, singular or not.
    """
    if edges is None:
        edges = detect_singular_edges(diag, target, tol)
    if not edges:
        return SingularGraph(edges=[], nodes=[], edge_nodes=[])
    pts = np.array([[*e.edge.a, *e.edge.b] for e in edges]).reshape(-1, 2)
    scale = max(1.0, float(np.abs(pts).max()))
    merge = 1e-7 * scale
    tree = cKDTree(pts)
    parent = list(range(len(pts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in tree.query_pairs(merge):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    roots = {}
    node_of_pt = np.empty(len(pts), dtype=int)
    nodes: list[SingularNode] = []
    for k in range(len(pts)):
        r = find(k)
        if r not in roots:
            roots[r] = len(nodes)
            nodes.append(SingularNode(location=Point2(*pts[k])))
        node_of_pt[k] = roots[r]
    edge_nodes = []
    for e_id in range(len(edges)):
        na, nb = int(node_of_pt[2 * e_id]), int(node_of_pt[2 * e_id + 1])
        edge_nodes.append((na, nb))
        for n_id in (na, nb):
            nodes[n_id].edge_ids.append(e_id)

    # Incident sites from the full diagram: any adjacency edge ending at the node.
    locs = np.array([n.location for n in nodes])
    ntree = cKDTree(locs)
    for i, j, seg in diag.adjacency:
        for p in (seg.a, seg.b):
            d, k = ntree.query(p)
            if d <= merge:
                nodes[k].site_ids.update((i, j))
    for n in nodes:
        if n.site_ids:
            n.dual_hull = convex_hull(diag.sites[sorted(n.site_ids)])
        if source is not None:
            n.on_source_boundary = (
                point_location(source, n.location, 10 * merge) is Location.BOUNDARY
            )
    return SingularGraph(edges=edges, nodes=nodes, edge_nodes=edge_nodes)


def chain_edges(graph: SingularGraph) -> list[list[int]]:
    """Maximal edge paths through degree-2 nodes; branch nodes stop chains.

    Every singular edge lands in exactly one chain; closed loops come back as
    cyclic chains.
    """
    n_edges = len(graph.edges)
    used = [False] * n_edges
    by_node: list[list[int]] = [n.edge_ids for n in graph.nodes]
    chains: list[list[int]] = []

    def other_node(e_id: int, n_id: int) -> int:
        a, b = graph.edge_nodes[e_id]
        return b if a == n_id else a

    def walk(start_edge: int, start_node: int) -> list[int]:
        chain = [start_edge]
        used[start_edge] = True
        cur = other_node(start_edge, start_node)
        while len(by_node[cur]) == 2:
            nxt = [e for e in by_node[cur] if not used[e]]
            if not nxt:
                break
            chain.append(nxt[0])
            used[nxt[0]] = True
            cur = other_node(nxt[0], cur)
        return chain

    for n_id, node in enumerate(graph.nodes):
        if node.degree == 2:
            continue
        for e_id in node.edge_ids:
            if not used[e_id]:
                chains.append(walk(e_id, n_id))
    for e_id in range(n_edges):  # leftover cycles
        if not used[e_id]:
            chains.append(walk(e_id, graph.edge_nodes[e_id][0]))
    return chains


def chain_node_path(graph: SingularGraph, chain: list[int]) -> list[int]:
    """Ordered node ids visited by a chain of edge ids."""
    if len(chain) == 1:
        return list(graph.edge_nodes[chain[0]])
    first_nodes = set(graph.edge_nodes[chain[0]])
    second_nodes = set(graph.edge_nodes[chain[1]])
    shared = first_nodes & second_nodes
    start = (first_nodes - shared).pop() if first_nodes - shared else shared.pop()
    path = [start]
    cur = start
    for e_id in chain:
        a, b = graph.edge_nodes[e_id]
        cur = b if a == cur else a
        path.append(cur)
    return path


def _point_hull_distance(p: np.ndarray, hull: ConvexPolygon) -> float:
    c = hull.coords
    if len(c) == 0:
        return float("inf")
    if len(c) == 1:
        return float(np.hypot(*(p - c[0])))
    if len(c) == 2:
        return _point_segment_distance(p, c[0], c[1])
    inside = True
    n = len(c)
    best = float("inf")
    for k in range(n):
        a, b = c[k], c[(k + 1) % n]
        e = b - a
        if e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]) < 0:
            inside = False
        best = min(best, _point_segment_distance(p, a, b))
    return 0.0 if inside else best


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    t = np.clip(((p - a) @ ab) / max(1e-300, ab @ ab), 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def _hull_segment_distance(hull: ConvexPolygon, a: np.ndarray, b: np.ndarray):
    """(distance, t) between a convex hull and segment ab; t locates the
    nearest point on ab."""
    c = hull.coords
    if len(c) == 0:
        return float("inf"), 0.5
    if len(c) >= 3:
        # Proper crossing: the segment parameter interval inside the hull.
        t0, t1 = 0.0, 1.0
        d = b - a
        feasible = True
        for k in range(len(c)):
            p, q = c[k], c[(k + 1) % len(c)]
            e = q - p
            nx, ny = e[1], -e[0]  # outward normal of a CCW hull
            na = nx * (a[0] - p[0]) + ny * (a[1] - p[1])
            nd = nx * d[0] + ny * d[1]
            if abs(nd) < 1e-300:
                if na > 0:
                    feasible = False
                    break
                continue
            tc = -na / nd
            if nd > 0:
                t1 = min(t1, tc)
            else:
                t0 = max(t0, tc)
            if t0 > t1:
                feasible = False
                break
        if feasible and t1 >= t0:
            return 0.0, 0.5 * (t0 + t1)
    best, best_t = float("inf"), 0.5
    for tend in (0.0, 1.0):
        p = a + tend * (b - a)
        d = _point_hull_distance(p, hull)
        if d < best:
            best, best_t = d, tend
    ab2 = max(1e-300, (b - a) @ (b - a))
    for v in c:
        t = float(np.clip(((v - a) @ (b - a)) / ab2, 0.0, 1.0))
        d = _point_segment_distance(v, a, b)
        if d < best:
            best, best_t = d, t
    return best, best_t


def classify_nodes(
    graph: SingularGraph, target: Polygon, tol: float
) -> list[PointClass]:
    """Tag each node by the target features its dual hull touches within tol.

    A touched vertex wins (Sigma1); otherwise two touched open edges make
    Sigma2Prime and three or more make Sigma2DoublePrime.
    """
    out: list[PointClass] = []
    tc = target.coords
    m = len(tc)
    for node in graph.nodes:
        hull = node.dual_hull if node.dual_hull is not None else ConvexPolygon(np.empty((0, 2)))
        verts: list[int] = []
        for i in range(m):
            if _point_hull_distance(tc[i], hull) <= tol:
                verts.append(i)
        edges: list[int] = []
        for i in range(m):
            a, b = tc[i], tc[(i + 1) % m]
            d, t = _hull_segment_distance(hull, a, b)
            if d <= tol:
                # Require the contact inside the open edge, clear of vertices.
                L = np.hypot(*(b - a))
                if t * L > tol and (1 - t) * L > tol:
                    edges.append(i)
        if verts:
            tag = SIGMA1
        elif len(edges) >= 3:
            tag = SIGMA2_DOUBLE_PRIME
        else:
            tag = SIGMA2_PRIME
        out.append(PointClass(tag=tag, touched_vertices=tuple(verts), touched_edges=tuple(edges)))
    return out


def cluster_count(points: np.ndarray, radius: float) -> int:
    """Number of clusters after merging points closer than radius."""
    if len(points) == 0:
        return 0
    tree = cKDTree(points)
    parent = list(range(len(points)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in tree.query_pairs(radius):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    return len({find(k) for k in range(len(points))})


def class_counts_clustered(
    graph: SingularGraph, classes: list[PointClass], merge_radius: float
) -> dict[str, int]:
    out = {}
    for tag in (SIGMA1, SIGMA2_PRIME, SIGMA2_DOUBLE_PRIME):
        pts = np.array(
            [graph.nodes[k].location for k in range(len(graph.nodes)) if classes[k].tag == tag]
        ).reshape(-1, 2)
        out[tag] = cluster_count(pts, merge_radius)
    return out


def _inner_normal_at(target: Polygon, p: np.ndarray):
    """Inner normal of the target edge nearest to p, and the distance to it."""
    tc = target.coords
    m = len(tc)
    best, best_i = float("inf"), 0
    for i in range(m):
        d = _point_segment_distance(p, tc[i], tc[(i + 1) % m])
        if d < best:
            best, best_i = d, i
    a, b = tc[best_i], tc[(best_i + 1) % m]
    e = b - a
    L = np.hypot(*e)
    # CCW polygon: interior on the left of the directed edge.
    return np.array([-e[1] / L, e[0] / L]), float(best)


def check_obliqueness(
    e: SingularEdge, target: Polygon, tol: float | None = None
) -> tuple[float, float]:
    """Transversality of the dual segment against the touched target edges.

    d1 = -normal . (inner normal at the first endpoint's boundary projection),
    d2 = +normal . (inner normal at the second's); both positive means the
    singular edge meets both target edges obliquely.  With tol given, raises
    when an endpoint sits further than tol from the boundary (near-regular
    edge that should have been filtered upstream).
    """
    yi = np.asarray(e.dual.a, dtype=float)
    yj = np.asarray(e.dual.b, dtype=float)
    ni, dist_i = _inner_normal_at(target, yi)
    nj, dist_j = _inner_normal_at(target, yj)
    if tol is not None and (dist_i > tol or dist_j > tol):
        raise DualEndpointNotOnBoundary(
            f"dual endpoints at distance ({dist_i:.3g}, {dist_j:.3g}) from the boundary"
        )
    nu = np.asarray(e.normal, dtype=float)
    return float(-nu @ ni), float(nu @ nj)


def verify_single_touch(node: SingularNode, target: Polygon, tol: float) -> bool:
    """Hull meets every closed target edge in at most a tol-length set."""
    hull = node.dual_hull
    if hull is None or len(hull.coords) == 0:
        return True
    tc = target.coords
    m = len(tc)
    for i in range(m):
        seg = Segment(Point2(*tc[i]), Point2(*tc[(i + 1) % m]))
        if segment_polygon_overlap_length(hull, seg) > tol:
            return False
    return True


def _resolve_func_source(potential, source: Polygon | None):
    if isinstance(potential, BrenierPotential):
        return potential.func, (source if source is not None else potential.problem.source)
    if source is None:
        raise SingularError("a source polygon is required for a bare function")
    return potential, source


def _section_region(func, x0, h: float, source: Polygon):
    sec = centered_section(func, x0, h, tol=1e-4)
    for v in sec.region.coords:
        if point_location(source, v, 1e-9) is Location.OUTSIDE:
            raise SectionEscapedDomain(f"section at h={h} leaves the source polygon")
    return sec


def fit_growth_exponent(
    potential,
    x0,
    tangent,
    h_values,
    source: Polygon | None = None,
) -> float:
    """Log-log slope of the tangential section width against the height.

    Smooth points give 1/2 (sections scale like sqrt(h)); the tangential
    regularity estimate predicts the same rate, up to epsilon, on the
    singular curve.  Accepts a solved potential or a bare max-affine function
    with an explicit source polygon.
    """
    func, source = _resolve_func_source(potential, source)
    t = np.asarray(tangent, dtype=float)
    t = t / np.hypot(*t)
    x0 = np.asarray(x0, dtype=float)
    widths = []
    hs = []
    span = source.diameter
    for h in h_values:
        sec = _section_region(func, x0, float(h), source)
        a = Point2(*(x0 - span * t))
        b = Point2(*(x0 + span * t))
        w = segment_polygon_overlap_length(sec.region, Segment(a, b))
        if w <= 0:
            continue
        widths.append(w)
        hs.append(float(h))
    if len(widths) < 2:
        raise SingularError("not enough valid sections for a growth fit")
    slope = np.polyfit(np.log(hs), np.log(widths), 1)[0]
    return float(slope)


def section_density(potential, source: Polygon, x0, h: float) -> float:
    """Fraction of the centred section lying on the active side of the local
    interface (the bisector of the two leading pieces at x0).

    Away from the singular set the bisector misses the section for small h and
    the ratio tends to 1; on the singular curve the split stays balanced.
    """
    func, source = _resolve_func_source(potential, source)
    x0 = np.asarray(x0, dtype=float)
    sec = _section_region(func, x0, h, source)
    f = func
    vals = f.piece_values(x0)
    order = np.argsort(-vals, kind="stable")
    i, j = int(order[0]), int(order[1])
    gi, gj = f.gradients[i], f.gradients[j]
    ci, cj = f.intercepts[i], f.intercepts[j]
    d = gj - gi
    nrm = np.hypot(*d)
    if nrm < 1e-15:
        return 1.0
    from .geometry import HalfPlane, clip_convex

    side = HalfPlane(Point2(d[0] / nrm, d[1] / nrm), (ci - cj) / nrm)
    area = sec.region.area
    if area <= 0:
        raise SingularError("degenerate section")
    part = clip_convex(sec.region, side).area
    return float(part / area)


def _special_nodes(graph: SingularGraph, classes: list[PointClass]) -> set[int]:
    return {
        n_id
        for n_id, node in enumerate(graph.nodes)
        if node.degree >= 3 or classes[n_id].tag == SIGMA1
    }


def sigma2_interior_edge_ids(
    graph: SingularGraph,
    chains: list[list[int]],
    classes: list[PointClass],
    exclusion_edges: int = 3,
    exclusion_radius: float | None = None,
) -> list[int]:
    """Edges in the smooth-curve regime: away from branch or vertex-touching
    nodes, by at least exclusion_edges chain steps and, when given, by the
    physical exclusion_radius.

    Obliqueness and turning statistics are only meaningful there; next to
    vertex images the target boundary normal itself is ambiguous.  The radius
    keeps the measured set a fixed compact region under refinement (chain
    steps alone shrink with the sample spacing).
    """
    special = _special_nodes(graph, classes)
    special_locs = np.array([graph.nodes[k].location for k in sorted(special)]).reshape(-1, 2)
    keep: list[int] = []
    for chain in chains:
        path = chain_node_path(graph, chain)
        special_pos = [p for p, n_id in enumerate(path) if n_id in special]
        for t, e_id in enumerate(chain):
            # Edge t sits between path nodes t and t+1.
            if special_pos and min(
                min(abs(t - p), abs(t + 1 - p)) for p in special_pos
            ) <= exclusion_edges:
                continue
            if exclusion_radius is not None and len(special_locs):
                mid = 0.5 * (
                    np.asarray(graph.edges[e_id].edge.a)
                    + np.asarray(graph.edges[e_id].edge.b)
                )
                if np.hypot(*(special_locs - mid).T).min() <= exclusion_radius:
                    continue
            keep.append(e_id)
    return keep


def chain_turning_angles(
    graph: SingularGraph,
    chains: list[list[int]],
    classes: list[PointClass] | None = None,
    exclusion_edges: int = 3,
    exclusion_radius: float | None = None,
) -> list[float]:
    """Turning angles at interior chain nodes, excluding nodes within
    exclusion_edges (and optionally exclusion_radius) of a branch node or a
    vertex-touching node."""
    special = set()
    for n_id, node in enumerate(graph.nodes):
        if node.degree >= 3:
            special.add(n_id)
        if classes is not None and classes[n_id].tag == SIGMA1:
            special.add(n_id)
    special_locs = np.array([graph.nodes[k].location for k in sorted(special)]).reshape(-1, 2)
    angles: list[float] = []
    for chain in chains:
        path = chain_node_path(graph, chain)
        k = len(chain)
        if k < 2:
            continue
        special_pos = [p for p, n_id in enumerate(path) if n_id in special]
        for t in range(1, k):
            if any(abs(t - p) <= exclusion_edges for p in special_pos):
                continue
            p0 = np.asarray(graph.nodes[path[t - 1]].location)
            p1 = np.asarray(graph.nodes[path[t]].location)
            p2 = np.asarray(graph.nodes[path[t + 1]].location)
            if exclusion_radius is not None and len(special_locs):
                if np.hypot(*(special_locs - p1).T).min() <= exclusion_radius:
                    continue
            u = p1 - p0
            v = p2 - p1
            nu, nv = np.hypot(*u), np.hypot(*v)
            if nu < 1e-14 or nv < 1e-14:
                continue
            cosang = np.clip((u @ v) / (nu * nv), -1.0, 1.0)
            angles.append(float(np.arccos(cosang)))
    return angles
