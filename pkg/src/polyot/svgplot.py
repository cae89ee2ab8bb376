"""Deterministic SVG output for diagrams, singular overlays and partial plans.

Floats are printed with 9 significant digits so identical runs emit
byte-identical files.
"""

from __future__ import annotations

import numpy as np

HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
    'viewBox="0 0 {w} {h}">\n'
    '<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>\n'
)
FOOTER = "</svg>\n"


def fnum(x: float) -> str:
    return f"{float(x):.9g}"


class Canvas:
    """Fixed-scale canvas mapping data coordinates to a padded pixel box."""

    def __init__(self, bounds, size: float = 720.0, pad: float = 24.0):
        (x0, y0), (x1, y1) = bounds
        span = max(x1 - x0, y1 - y0, 1e-9)
        self.scale = (size - 2 * pad) / span
        self.x0, self.y1 = x0, y1
        self.pad = pad
        self.width = (x1 - x0) * self.scale + 2 * pad
        self.height = (y1 - y0) * self.scale + 2 * pad
        self.items: list[str] = []

    def to_px(self, p) -> tuple[float, float]:
        return (
            (p[0] - self.x0) * self.scale + self.pad,
            (self.y1 - p[1]) * self.scale + self.pad,
        )

    def _pts(self, pts) -> str:
        return " ".join(f"{fnum(x)},{fnum(y)}" for x, y in map(self.to_px, pts))

    def polygon(self, pts, fill="none", stroke="#000000", width=1.0, dash=None, opacity=None):
        style = f'fill="{fill}" stroke="{stroke}" stroke-width="{fnum(width)}"'
        if dash:
            style += f' stroke-dasharray="{dash}"'
        if opacity is not None:
            style += f' fill-opacity="{fnum(opacity)}"'
        self.items.append(f'<polygon points="{self._pts(pts)}" {style}/>')

    def polyline(self, pts, stroke="#000000", width=1.0, dash=None):
        style = f'fill="none" stroke="{stroke}" stroke-width="{fnum(width)}"'
        if dash:
            style += f' stroke-dasharray="{dash}"'
        self.items.append(f'<polyline points="{self._pts(pts)}" {style}/>')

    def segment(self, a, b, stroke="#000000", width=1.0, dash=None):
        (x1, y1), (x2, y2) = self.to_px(a), self.to_px(b)
        style = f'stroke="{stroke}" stroke-width="{fnum(width)}"'
        if dash:
            style += f' stroke-dasharray="{dash}"'
        self.items.append(
            f'<line x1="{fnum(x1)}" y1="{fnum(y1)}" x2="{fnum(x2)}" y2="{fnum(y2)}" {style}/>'
        )

    def circle(self, c, r_px, fill="#000000", stroke="none"):
        x, y = self.to_px(c)
        self.items.append(
            f'<circle cx="{fnum(x)}" cy="{fnum(y)}" r="{fnum(r_px)}" fill="{fill}" stroke="{stroke}"/>'
        )

    def tostring(self) -> str:
        head = HEADER.format(w=fnum(self.width), h=fnum(self.height))
        return head + "\n".join(self.items) + "\n" + FOOTER


def _bounds(*point_sets):
    pts = np.vstack([np.asarray(p, float).reshape(-1, 2) for p in point_sets if len(p)])
    return pts.min(axis=0), pts.max(axis=0)


def diagram_svg(diagram, source, target=None) -> str:
    """Laguerre cells in gray over the source, sites as dots."""
    sets = [source.coords]
    if target is not None:
        sets.append(target.coords)
    cv = Canvas(_bounds(*sets))
    if target is not None:
        cv.polygon(target.coords, fill="#f3f3f3", stroke="#999999", width=1.0)
    for cell in diagram.cells:
        if len(cell.coords) >= 3:
            cv.polygon(cell.coords, fill="none", stroke="#888888", width=0.6)
    cv.polygon(source.coords, fill="none", stroke="#222222", width=1.4)
    for s in diagram.sites:
        cv.circle(s, 1.4, fill="#3366cc")
    return cv.tostring()


def singular_svg(diagram, source, target, graph, chains, classes=None) -> str:
    """Cells gray, singular chains red, branch nodes marked, duals dashed."""
    cv = Canvas(_bounds(source.coords, target.coords))
    cv.polygon(target.coords, fill="#f3f3f3", stroke="#999999", width=1.0)
    for cell in diagram.cells:
        if len(cell.coords) >= 3:
            cv.polygon(cell.coords, fill="none", stroke="#cccccc", width=0.5)
    cv.polygon(source.coords, fill="none", stroke="#222222", width=1.4)
    for e in graph.edges:
        cv.segment(e.dual.a, e.dual.b, stroke="#88aadd", width=0.5, dash="3,3")
    for chain in chains:
        for e_id in chain:
            e = graph.edges[e_id]
            cv.segment(e.edge.a, e.edge.b, stroke="#cc2222", width=1.8)
    for n_id, node in enumerate(graph.nodes):
        if node.degree >= 3:
            cv.circle(node.location, 3.2, fill="none", stroke="#cc2222")
        if classes is not None and classes[n_id].tag == "Sigma1":
            cv.circle(node.location, 2.2, fill="#e69500")
    return cv.tostring()


def partial_svg(sol, arrow_step: int = 7) -> str:
    """Active region shaded, free boundary red, subsampled couplings as thin
    arrows, the separating line dashed."""
    from .partial import check_separation

    norm = check_separation(sol.problem)[0]
    cv = Canvas(_bounds(norm.source.coords, norm.target.coords))
    cv.polygon(norm.source.coords, fill="none", stroke="#222222", width=1.4)
    cv.polygon(norm.target.coords, fill="#f3f3f3", stroke="#999999", width=1.0)
    for k, p in enumerate(sol.plan.source_points):
        color = "#3A7D44" if sol.active_source[k] else "#bbbbbb"
        cv.circle(p, 1.2, fill=color)
    for k, p in enumerate(sol.plan.target_points):
        color = "#3366cc" if sol.active_target[k] else "#bbbbbb"
        cv.circle(p, 1.2, fill=color)
    cpl = sol.plan.couplings
    for k in range(0, len(cpl), max(1, arrow_step)):
        i, j = int(cpl[k, 0]), int(cpl[k, 1])
        cv.segment(
            sol.plan.source_points[i], sol.plan.target_points[j], stroke="#99bb99", width=0.4
        )
    lo = min(norm.source.coords[:, 1].min(), norm.target.coords[:, 1].min())
    hi = max(norm.source.coords[:, 1].max(), norm.target.coords[:, 1].max())
    cv.segment((0.0, lo), (0.0, hi), stroke="#555555", width=1.0, dash="6,4")
    for comp in sol.fb_components:
        cv.polyline(comp, stroke="#cc2222", width=2.0)
    return cv.tostring()
