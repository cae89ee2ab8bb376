import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyot.geometry import Polygon, point_location, Location
from polyot.potential import (
    PiecewiseAffineConvex,
    centered_section,
    evaluate,
    gradient_hull,
    legendre,
    ma_measure,
    subdifferential_at,
    subdivision_vertices,
)

ABS_X1 = PiecewiseAffineConvex([(1, 0), (-1, 0)], [0.0, 0.0])


def box(half, center=(0.0, 0.0)):
    cx, cy = center
    return Polygon(
        [
            (cx - half, cy - half),
            (cx + half, cy - half),
            (cx + half, cy + half),
            (cx - half, cy + half),
        ]
    )


def tangent_approx(fn, grad, pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    vals = np.array([fn(p) for p in pts])
    grads = np.array([grad(p) for p in pts])
    return PiecewiseAffineConvex.from_tangents(pts, vals, grads)


def quad_grid(half=2.0, k=15):
    xs = np.linspace(-half, half, k)
    return np.array([(a, b) for a in xs for b in xs])


def test_evaluate_constant_zero():
    f = PiecewiseAffineConvex([(0, 0)], [0.0])
    assert evaluate(f, (3.7, -12.0)) == 0.0


def test_evaluate_abs():
    assert evaluate(ABS_X1, (2, 5)) == pytest.approx(2.0)
    assert evaluate(ABS_X1, (0, 3)) == pytest.approx(0.0)


def test_dedupe_and_prune():
    # Duplicate gradient keeps the larger intercept; dominated piece dropped.
    f = PiecewiseAffineConvex([(1, 0), (1, 0), (0, 0)], [0.0, 1.0, -5.0])
    assert len(f) == 2
    assert evaluate(f, (0, 0)) == pytest.approx(1.0)
    g = PiecewiseAffineConvex([(1, 0), (-1, 0), (0, 0)], [0.0, 0.0, -3.0])
    # (0,0;-3) lies strictly under max(x1, -x1).
    assert len(g) == 2


def test_subdifferential_ridge():
    cell = subdifferential_at(ABS_X1, (0, 0))
    assert len(cell.hull.coords) == 2
    ends = sorted(map(tuple, cell.hull.coords))
    assert ends[0] == pytest.approx((-1, 0))
    assert ends[1] == pytest.approx((1, 0))


def test_subdifferential_smooth_point():
    cell = subdifferential_at(ABS_X1, (1, 0))
    assert len(cell.hull.coords) == 1
    assert tuple(cell.hull.coords[0]) == pytest.approx((1, 0))


def test_subdifferential_triangle():
    f = PiecewiseAffineConvex([(0, 0), (1, 0), (0, 1)], [0.0, 0.0, 0.0])
    cell = subdifferential_at(f, (0, 0))
    assert len(cell.hull.coords) == 3
    assert cell.hull.area == pytest.approx(0.5)


def test_legendre_selfdual_quadratic():
    f = tangent_approx(lambda p: 0.5 * (p @ p), lambda p: p, quad_grid())
    conj = legendre(f, box(3.0))
    rng = np.random.RandomState(0)
    ys = rng.uniform(-1.2, 1.2, size=(40, 2))
    ref = 0.5 * (ys * ys).sum(axis=1)
    got = conj.values(ys)
    # Piecewise-affine approximation error of the grid, not of the transform.
    assert np.abs(got - ref).max() < 5e-2
    exact = conj.values(quad_grid(1.5, 9))
    assert np.abs(exact - 0.5 * (quad_grid(1.5, 9) ** 2).sum(axis=1)).max() < 5e-2


def test_legendre_single_linear_piece():
    a = np.array([1.0, 2.0])
    f = PiecewiseAffineConvex([a], [0.0])
    conj = legendre(f, box(2.0))
    assert conj.value(a) == pytest.approx(0.0, abs=1e-12)
    dom = gradient_hull(f)
    assert len(dom.coords) == 1
    assert tuple(dom.coords[0]) == pytest.approx((1.0, 2.0))


def test_legendre_two_pieces_zero_on_segment():
    f = PiecewiseAffineConvex([(0, 0), (1, 0)], [0.0, 0.0])
    conj = legendre(f, box(2.0))
    for t in (0.0, 0.25, 0.5, 0.99, 1.0):
        assert conj.value((t, 0.0)) == pytest.approx(0.0, abs=1e-12)
    dom = gradient_hull(f)
    assert len(dom.coords) == 2


def random_paffine(seed, n=8, spread=1.0):
    rng = np.random.RandomState(seed)
    g = rng.normal(0, spread, size=(n, 2))
    c = rng.normal(0, 0.4, size=n)
    return PiecewiseAffineConvex(g, c)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_legendre_involution_at_subdivision_vertices(seed):
    f = random_paffine(seed)
    verts = subdivision_vertices(f)
    if len(verts) == 0:
        return
    half = float(np.abs(verts).max()) + 2.0
    conj = legendre(f, box(half))
    ghalf = float(np.abs(f.gradients).max()) + 2.0
    back = legendre(conj, box(ghalf))
    assert np.abs(back.values(verts) - f.values(verts)).max() < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_subdifferential_monotone(seed):
    f = random_paffine(seed)
    rng = np.random.RandomState(seed + 1)
    xs = rng.uniform(-2, 2, size=(12, 2))
    cells = [subdifferential_at(f, x) for x in xs]
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            dx = xs[i] - xs[j]
            for p in cells[i].hull.coords:
                for q in cells[j].hull.coords:
                    assert (p - q) @ dx >= -1e-12


def test_ma_measure_no_mass_for_flat_functions():
    assert ma_measure(PiecewiseAffineConvex([(0.3, 0.7)], [1.0]), box(5)) == 0.0
    assert ma_measure(ABS_X1, box(5)) == 0.0


def test_ma_measure_total_is_gradient_hull_area():
    # All atoms of a compactly-supported subdivision sum to the hull area.
    f = random_paffine(3, n=14)
    total = ma_measure(f, box(100.0))
    assert total == pytest.approx(gradient_hull(f).area, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.8, 0.8))
def test_ma_measure_additive(seed, split):
    f = random_paffine(seed)
    verts = subdivision_vertices(f)
    if len(verts) == 0:
        return
    half = float(np.abs(verts).max()) + 1.0
    left = Polygon([(-half, -half), (split, -half), (split, half), (-half, half)])
    right = Polygon([(split, -half), (half, -half), (half, half), (split, half)])
    if any(abs(v[0] - split) < 1e-7 for v in verts):
        return  # split through an atom is ambiguous by design
    whole = ma_measure(f, box(half))
    assert ma_measure(f, left) + ma_measure(f, right) == pytest.approx(whole, abs=1e-9)


def test_centered_section_quadratic_origin():
    f = tangent_approx(lambda p: 0.5 * (p @ p), lambda p: p, quad_grid(2.0, 21))
    h = 0.1
    sec = centered_section(f, (0, 0), h, tol=1e-6)
    assert np.hypot(*sec.shift) < 2e-2
    r = np.hypot(*(sec.region.coords.T))
    assert r.max() == pytest.approx(np.sqrt(2 * h), rel=0.15)
    assert r.min() == pytest.approx(np.sqrt(2 * h), rel=0.15)


def test_centered_section_quadratic_shifted():
    f = tangent_approx(lambda p: 0.5 * (p @ p), lambda p: p, quad_grid(2.5, 23))
    sec = centered_section(f, (1.0, 0.0), 0.05, tol=1e-6)
    assert sec.shift.x == pytest.approx(1.0, abs=3e-2)
    assert abs(sec.shift.y) < 3e-2
    c = sec.region.centroid
    assert np.hypot(c.x - 1.0, c.y) < 1e-5


def ridge_fn(p):
    return abs(p[0]) + 0.5 * p[1] ** 2


def ridge_grad(p):
    return np.array([np.sign(p[0]) if p[0] != 0 else 1.0, p[1]])


def ridge_approx(k=25, half=2.0):
    xs = np.linspace(-half, half, k)
    pts = np.array([(a, b) for a in xs for b in xs if abs(a) > 1e-9])
    return tangent_approx(ridge_fn, ridge_grad, pts)


def test_centered_section_ridge_shift_zero():
    # Independent check: brute-force scan of the tilt against the centroid
    # offset confirms the symmetric optimum before trusting the iteration.
    f = ridge_approx()
    h = 0.1
    y0 = np.zeros(2)
    level0 = f.value(y0) + h

    def centroid_offset(pbar):
        from polyot.potential import _section_polygon
        from polyot.geometry import ConvexPolygon

        poly = _section_polygon(f, y0, np.asarray(pbar), level0 - pbar @ y0, 5.0)
        if len(poly) < 3:
            return np.inf
        c = ConvexPolygon(poly).centroid
        return np.hypot(c.x, c.y)

    grid = np.linspace(-0.3, 0.3, 13)
    offs = {(a, b): centroid_offset((a, b)) for a in grid for b in grid}
    best = min(offs, key=offs.get)
    assert np.hypot(*best) <= 0.101  # brute-force optimum sits at ~0

    sec = centered_section(f, y0, h, tol=1e-6)
    assert np.hypot(*sec.shift) < 0.05
    xs = sec.region.coords
    assert abs(xs[:, 0].max() + xs[:, 0].min()) < 2e-2  # symmetric in x1
    assert abs(xs[:, 1].max() + xs[:, 1].min()) < 2e-2  # symmetric in x2
    assert sec.balance_constant > 0.2
    assert sec.sup_ratio <= 1.25


def test_centered_section_constants_stable_under_h():
    f = ridge_approx(k=31)
    secs = [centered_section(f, (0, 0), h, tol=1e-6) for h in (0.2, 0.1, 0.05)]
    assert min(s.balance_constant for s in secs) > 0.2
    sups = [s.sup_ratio for s in secs]
    assert max(sups) / max(1e-12, min(sups)) < 2.0


def test_centered_section_rejects_bad_height():
    with pytest.raises(ValueError):
        centered_section(ABS_X1, (0, 0), -1.0)


def test_json_roundtrip():
    f = random_paffine(5)
    g = PiecewiseAffineConvex.from_json(f.to_json())
    pts = np.random.RandomState(2).uniform(-2, 2, (20, 2))
    assert np.allclose(f.values(pts), g.values(pts))
