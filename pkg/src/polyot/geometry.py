"""Planar primitives: polygons, half-plane clipping, point location, reflex tests.

Everything is plain floating point with explicit tolerances (default 1e-9
absolute, coordinates assumed O(1)).  Polygons are stored CCW; CW input is
reoriented with a warning.  All values are immutable after construction and
all operations are pure functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

DEFAULT_TOL = 1e-9


def cross2(u, v) -> float:
    """Scalar 2-D cross product u_x v_y - u_y v_x."""
    return float(u[0] * v[1] - u[1] * v[0])


class GeometryError(Exception):
    pass


class DegeneratePolygon(GeometryError):
    pass


class TriangulationFailure(GeometryError):
    pass


class EndpointOutside(GeometryError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


def as_point(p) -> Point2:
    """Coerce a pair-like into a finite Point2."""
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise GeometryError(f"non-finite coordinates ({x}, {y})")
    return Point2(x, y)


@dataclass(frozen=True)
class Segment:
    a: Point2
    b: Point2

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        object.__setattr__(self, "b", as_point(self.b))
        if self.a == self.b:
            raise GeometryError("degenerate segment: a == b")

    @property
    def length(self) -> float:
        return float(np.hypot(self.b.x - self.a.x, self.b.y - self.a.y))

    @property
    def direction(self) -> Point2:
        L = self.length
        return Point2((self.b.x - self.a.x) / L, (self.b.y - self.a.y) / L)


class Location(Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def _signed_area(coords: np.ndarray) -> float:
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _segments_properly_intersect(p1, p2, q1, q2, eps=1e-12) -> bool:
    d1 = cross2(q2 - q1, p1 - q1)
    d2 = cross2(q2 - q1, p2 - q1)
    d3 = cross2(p2 - p1, q1 - p1)
    d4 = cross2(p2 - p1, q2 - p1)
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple CCW polygon.  ``holes`` is reserved and must stay empty."""

    coords: np.ndarray
    holes: tuple = ()

    def __init__(self, vertices, holes=()):
        coords = np.asarray(vertices, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 3:
            raise DegeneratePolygon("polygon needs >= 3 planar vertices")
        if not np.isfinite(coords).all():
            raise DegeneratePolygon("non-finite vertex coordinates")
        if len(holes) > 0:
            raise DegeneratePolygon("polygons with holes are not supported")
        area = _signed_area(coords)
        if abs(area) <= DEFAULT_TOL:
            raise DegeneratePolygon(f"polygon area {area} too small")
        if area < 0:
            warnings.warn("clockwise polygon input, reorienting to CCW", stacklevel=3)
            coords = coords[::-1].copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "holes", ())
        self._check_simple()

    def _check_simple(self):
        c = self.coords
        n = len(c)
        for i in range(n):
            p1, p2 = c[i], c[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or j == (i + 1) % n:
                    continue
                if _segments_properly_intersect(p1, p2, c[j], c[(j + 1) % n]):
                    raise DegeneratePolygon("self-intersecting polygon")

    @property
    def vertices(self) -> list[Point2]:
        return [Point2(*v) for v in self.coords]

    def __len__(self) -> int:
        return len(self.coords)

    def edge(self, i: int) -> Segment:
        c = self.coords
        return Segment(Point2(*c[i]), Point2(*c[(i + 1) % len(c)]))

    @property
    def diameter(self) -> float:
        lo, hi = self.coords.min(axis=0), self.coords.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def to_json(self) -> dict:
        return {"vertices": [[float(x), float(y)] for x, y in self.coords], "holes": []}

    @staticmethod
    def from_json(obj: dict) -> "Polygon":
        return Polygon(obj["vertices"], holes=tuple(obj.get("holes", ())))


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Convex CCW vertex chain; degenerate forms (point, segment, empty) allowed."""

    coords: np.ndarray

    def __init__(self, vertices):
        coords = np.asarray(vertices, dtype=float).reshape(-1, 2)
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def is_empty(self) -> bool:
        return len(self.coords) == 0

    @property
    def area(self) -> float:
        if len(self.coords) < 3:
            return 0.0
        return abs(_signed_area(self.coords))

    @property
    def centroid(self) -> Point2:
        c = self.coords
        if len(c) == 0:
            raise GeometryError("centroid of empty polygon")
        if len(c) < 3 or self.area == 0.0:
            return Point2(*c.mean(axis=0))
        x, y = c[:, 0], c[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = cr.sum() / 2.0
        cx = ((x + xn) * cr).sum() / (6.0 * a)
        cy = ((y + yn) * cr).sum() / (6.0 * a)
        return Point2(cx, cy)

    def second_moment(self) -> np.ndarray:
        """Covariance matrix of the uniform measure on the polygon."""
        c = self.coords
        if len(c) < 3:
            raise GeometryError("second moment needs a 2-dimensional polygon")
        cx, cy = self.centroid
        p = c - (cx, cy)
        x, y = p[:, 0], p[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = cr.sum() / 2.0
        ixx = (cr * (x * x + x * xn + xn * xn)).sum() / 12.0
        iyy = (cr * (y * y + y * yn + yn * yn)).sum() / 12.0
        ixy = (cr * (x * yn + 2 * x * y + 2 * xn * yn + xn * y)).sum() / 24.0
        return np.array([[ixx, ixy], [ixy, iyy]]) / a

    @property
    def diameter(self) -> float:
        if len(self.coords) < 2:
            return 0.0
        lo, hi = self.coords.min(axis=0), self.coords.max(axis=0)
        return float(np.hypot(*(hi - lo)))


@dataclass(frozen=True)
class HalfPlane:
    """The set {p : p . normal <= offset}; normal must be unit length."""

    normal: Point2
    offset: float

    def __post_init__(self):
        n = as_point(self.normal)
        if abs(np.hypot(n.x, n.y) - 1.0) > 1e-12:
            raise GeometryError("half-plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @staticmethod
    def from_direction(direction, offset) -> "HalfPlane":
        d = np.asarray(direction, dtype=float)
        L = np.hypot(*d)
        if L == 0:
            raise GeometryError("zero direction for half-plane")
        return HalfPlane(Point2(d[0] / L, d[1] / L), float(offset) / L)

    @property
    def flipped(self) -> "HalfPlane":
        return HalfPlane(Point2(-self.normal.x, -self.normal.y), -self.offset)


def polygon_area(poly: Polygon) -> float:
    """Shoelace area; positive since polygons are stored CCW."""
    return _signed_area(poly.coords)


def _edge_distances(coords: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distance from p to every closed edge of the vertex loop."""
    a = coords
    b = np.roll(coords, -1, axis=0)
    ab = b - a
    ap = p - a
    denom = (ab * ab).sum(axis=1)
    t = np.clip((ap * ab).sum(axis=1) / np.where(denom == 0, 1, denom), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def distance_to_boundary(poly: Polygon, p) -> float:
    return float(_edge_distances(poly.coords, np.asarray(p, dtype=float)).min())


def _winding_contains(coords: np.ndarray, p: np.ndarray) -> bool:
    x, y = p
    vx, vy = coords[:, 0], coords[:, 1]
    wx, wy = np.roll(vx, -1), np.roll(vy, -1)
    cond = (vy <= y) != (wy <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = vx + (y - vy) * (wx - vx) / (wy - vy)
    return bool(np.count_nonzero(cond & (x < xint)) % 2)


def point_location(poly: Polygon, p, tol: float = DEFAULT_TOL) -> Location:
    """Boundary within tol of an edge, else an even-odd crossing decision."""
    q = np.asarray(as_point(p), dtype=float)
    if _edge_distances(poly.coords, q).min() <= tol:
        return Location.BOUNDARY
    return Location.INSIDE if _winding_contains(poly.coords, q) else Location.OUTSIDE


def _clip_interval_by_halfplane(t0, t1, a, d, normal, offset):
    """Clip the parameter interval of the line a + t*d against n.x <= c."""
    na = normal[0] * a[0] + normal[1] * a[1]
    nd = normal[0] * d[0] + normal[1] * d[1]
    if abs(nd) < 1e-300:
        return (t0, t1) if na <= offset else None
    tc = (offset - na) / nd
    if nd > 0:
        t1 = min(t1, tc)
    else:
        t0 = max(t0, tc)
    return (t0, t1) if t0 < t1 else None


def segment_exits(poly: Polygon, s: Segment, tol: float = DEFAULT_TOL) -> bool:
    """True iff part of the open segment leaves the closed polygon.

    Decided by the uncovered length of s after clipping against the polygon,
    so a segment gliding along an edge does not exit.  Both endpoints must be
    within tol of the closure.
    """
    a = np.asarray(s.a, dtype=float)
    b = np.asarray(s.b, dtype=float)
    for e in (a, b):
        if point_location(poly, e, tol) is Location.OUTSIDE:
            raise EndpointOutside(f"segment endpoint {tuple(e)} outside polygon")
    d = b - a
    L = s.length
    # Breakpoints: intersections of the supporting line with every polygon edge.
    ts = [0.0, 1.0]
    c = poly.coords
    n = len(c)
    for i in range(n):
        p, q = c[i], c[(i + 1) % n]
        r = q - p
        denom = d[0] * r[1] - d[1] * r[0]
        if abs(denom) < 1e-15 * max(1.0, L):
            continue
        t = ((p[0] - a[0]) * r[1] - (p[1] - a[1]) * r[0]) / denom
        u = ((p[0] - a[0]) * d[1] - (p[1] - a[1]) * d[0]) / denom
        if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
            ts.append(min(1.0, max(0.0, t)))
    ts = sorted(set(ts))
    uncovered = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        mid = a + 0.5 * (t0 + t1) * d
        if point_location(poly, mid, tol) is Location.OUTSIDE:
            uncovered += (t1 - t0) * L
    return uncovered > tol


def clip_convex(cell: ConvexPolygon, h: HalfPlane) -> ConvexPolygon:
    """Sutherland-Hodgman clip of a convex chain by one half-plane."""
    poly, _ = clip_convex_tagged(cell.coords, None, h.normal, h.offset)
    return ConvexPolygon(poly)


def clip_convex_tagged(coords, tags, normal, offset, new_tag=-1, eps=1e-12):
    """Half-plane clip of a convex chain that tracks which cut made each edge.

    ``tags[k]`` labels the edge from vertex k to vertex k+1 (cyclic).  Edges
    created by this cut get ``new_tag``.  Returns (coords, tags); tags is None
    when the input tags is None.
    """
    c = np.asarray(coords, dtype=float).reshape(-1, 2)
    m = len(c)
    track = tags is not None
    if m == 0:
        return c, ([] if track else None)
    nx, ny = float(normal[0]), float(normal[1])
    d = c[:, 0] * nx + c[:, 1] * ny - offset
    inside = d <= eps
    if inside.all():
        return c, (list(tags) if track else None)
    if not inside.any():
        return c[:0], ([] if track else None)
    in_tags = list(tags) if track else [None] * m
    if m == 2:
        a, b = c[0], c[1]
        t = d[0] / (d[0] - d[1])
        p = a + t * (b - a)
        kept = np.array([a, p]) if inside[0] else np.array([p, b])
        return kept, ([in_tags[0], in_tags[0]] if track else None)
    out_pts: list = []
    out_tags: list = []
    for i in range(m):
        j = (i + 1) % m
        a, b = c[i], c[j]
        if inside[i]:
            out_pts.append(a)
            out_tags.append(in_tags[i])
            if not inside[j]:
                t = d[i] / (d[i] - d[j])
                out_pts.append(a + t * (b - a))
                out_tags.append(new_tag)  # the cut edge starts here
        elif inside[j]:
            t = d[i] / (d[i] - d[j])
            out_pts.append(a + t * (b - a))
            out_tags.append(in_tags[i])  # re-entry resumes edge i
    # Merge consecutive duplicates (vertex exactly on the cut line); the
    # outgoing edge of the merged vertex keeps the later tag.
    pts_out: list = []
    tags_out: list = []
    for p, t in zip(out_pts, out_tags):
        if pts_out and np.hypot(p[0] - pts_out[-1][0], p[1] - pts_out[-1][1]) < eps:
            tags_out[-1] = t
            continue
        pts_out.append(p)
        tags_out.append(t)
    if len(pts_out) >= 2 and np.hypot(
        pts_out[-1][0] - pts_out[0][0], pts_out[-1][1] - pts_out[0][1]
    ) < eps:
        pts_out.pop()
        tags_out.pop()
    arr = np.array(pts_out).reshape(-1, 2)
    return arr, (tags_out if track else None)


def is_concave_vertex(poly: Polygon, i: int, tol: float = DEFAULT_TOL) -> bool:
    """Reflex test: interior angle at vertex i exceeds pi."""
    c = poly.coords
    n = len(c)
    if not 0 <= i < n:
        raise IndexError(f"vertex index {i} out of range")
    prev, cur, nxt = c[(i - 1) % n], c[i], c[(i + 1) % n]
    return cross2(cur - prev, nxt - cur) < -tol


def is_convex_polygon(poly: Polygon, tol: float = DEFAULT_TOL) -> bool:
    return not any(is_concave_vertex(poly, i, tol) for i in range(len(poly)))


def triangulate(poly: Polygon) -> list[np.ndarray]:
    """Ear-clipping triangulation; every triangle vertex is a polygon vertex."""
    idx = list(range(len(poly)))
    c = poly.coords
    tris: list[np.ndarray] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * len(poly) ** 2:
            raise TriangulationFailure("ear clipping made no progress")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, d = c[i0], c[i1], c[i2]
            if cross2(b - a, d - b) <= 1e-15:
                continue  # reflex or flat corner, not an ear
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = c[j]
                s1 = cross2(b - a, p - a)
                s2 = cross2(d - b, p - b)
                s3 = cross2(a - d, p - d)
                if s1 >= -1e-15 and s2 >= -1e-15 and s3 >= -1e-15:
                    ok = False
                    break
            if ok:
                tris.append(np.array([a, b, d]))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise TriangulationFailure("no ear found (degenerate polygon?)")
    tris.append(c[idx])
    return tris


def convex_hull(points) -> ConvexPolygon:
    """Monotone-chain hull, degenerate-friendly (point and segment outputs)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return ConvexPolygon(pts)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3 or abs(_signed_area(hull)) < 1e-15:
        # Collinear input: return the extreme segment.
        return ConvexPolygon(np.array([pts[0], pts[-1]]))
    return ConvexPolygon(hull)


def segment_polygon_overlap_length(hull: ConvexPolygon, seg: Segment) -> float:
    """Length of seg inside a convex polygon (0 for degenerate hulls off the line)."""
    c = hull.coords
    if len(c) == 0:
        return 0.0
    a = np.asarray(seg.a, dtype=float)
    d = np.asarray(seg.b, dtype=float) - a
    if len(c) == 1:
        return 0.0
    if len(c) == 2:
        # Segment-segment overlap: project if collinear.
        u = c[1] - c[0]
        if abs(cross2(u, d)) > 1e-12 * max(1, np.hypot(*u)) * max(1, np.hypot(*d)):
            return 0.0
        if abs(cross2(c[0] - a, d)) > 1e-9 * max(1, np.hypot(*d)):
            return 0.0
        t0 = np.dot(c[0] - a, d) / np.dot(d, d)
        t1 = np.dot(c[1] - a, d) / np.dot(d, d)
        lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
        return max(0.0, hi - lo) * seg.length
    t0, t1 = 0.0, 1.0
    n = len(c)
    for i in range(n):
        p, q = c[i], c[(i + 1) % n]
        e = q - p
        # Interior is to the left of each CCW edge: cross(e, x - p) >= 0.
        nx, ny = e[1], -e[0]  # outward normal
        interval = _clip_interval_by_halfplane(t0, t1, a - p, d, (nx, ny), 0.0)
        if interval is None:
            return 0.0
        t0, t1 = interval
    return (t1 - t0) * seg.length


def polyline_length(points: np.ndarray) -> float:
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.hypot(*np.diff(p, axis=0).T).sum())
