import numpy as np
import pytest

from polyot.geometry import ConvexPolygon, Location, Polygon, point_location, polygon_area, triangulate
from polyot.otsolve import (
    BrenierPotential,
    DuplicateSites,
    NonConvexSource,
    SemiDiscreteProblem,
    build_laguerre,
    cell_masses,
    dual_objective,
    make_problem,
    map_point,
    sample_target,
    solve_weights,
)
from polyot.potential import legendre, ma_measure
from polyot.shapes import lshape, square_for, unit_square


def test_build_single_site():
    diag = build_laguerre([(0.4, 0.6)], [0.0], unit_square())
    assert len(diag.cells) == 1
    assert diag.cells[0].area == pytest.approx(1.0)
    assert diag.adjacency == []


def test_build_two_sites_equal_weights_is_voronoi():
    sites = [(0.25, 0.5), (0.75, 0.5)]
    diag = build_laguerre(sites, [0.0, 0.0], unit_square())
    assert diag.areas == pytest.approx([0.5, 0.5])
    (i, j, seg) = diag.adjacency[0]
    assert (i, j) == (0, 1)
    assert seg.a.x == pytest.approx(0.5)
    assert seg.b.x == pytest.approx(0.5)


def test_build_rejects_duplicates_and_nonconvex_source():
    with pytest.raises(DuplicateSites):
        build_laguerre([(0.5, 0.5), (0.5, 0.5)], [0, 0], unit_square())
    with pytest.raises(NonConvexSource):
        build_laguerre([(0.5, 0.5), (0.2, 0.2)], [0, 0], lshape())


def test_two_site_weights_analytic():
    # Masses (1/4, 3/4) on the unit square: the splitting line sits at
    # x = 1/4, so w1 - w2 = 2 * 0.5 * (0.25 - 0.5) = -0.25 (zero-mean gauge
    # gives -0.125, +0.125).  Derived by hand from the bisector equation.
    sites = np.array([(0.25, 0.5), (0.75, 0.5)])
    prob = SemiDiscreteProblem(
        source=unit_square(),
        sites=sites,
        masses=np.array([0.25, 0.75]),
        target_polygon=unit_square(),
    )
    w, diag, _ = solve_weights(prob, tol=1e-10)
    assert w == pytest.approx([-0.125, 0.125], abs=1e-9)
    assert diag.areas == pytest.approx([0.25, 0.75], abs=1e-9)
    x_split = diag.adjacency[0][2].a.x
    assert x_split == pytest.approx(0.25, abs=1e-9)


def test_one_site_solution_gauge():
    prob = SemiDiscreteProblem(
        source=unit_square(),
        sites=np.array([(0.3, 0.3)]),
        masses=np.array([1.0]),
        target_polygon=unit_square(),
    )
    w, diag, pot = solve_weights(prob)
    assert w == pytest.approx([0.0])
    assert diag.areas[0] == pytest.approx(1.0)
    assert map_point(pot, (0.9, 0.1)).point == pytest.approx((0.3, 0.3))


def test_newton_stall_signalled():
    from polyot.otsolve import NewtonStall

    prob = SemiDiscreteProblem(
        source=unit_square(),
        sites=np.array([(0.25, 0.5), (0.75, 0.5)]),
        masses=np.array([0.25, 0.75]),
        target_polygon=unit_square(),
    )
    with pytest.raises(NewtonStall):
        solve_weights(prob, tol=1e-12, max_iters=1)


def test_symmetric_two_sites_equal_weights():
    prob = SemiDiscreteProblem(
        source=unit_square(),
        sites=np.array([(0.25, 0.5), (0.75, 0.5)]),
        masses=np.array([0.5, 0.5]),
        target_polygon=unit_square(),
    )
    w, _, _ = solve_weights(prob, tol=1e-10)
    assert w == pytest.approx([0.0, 0.0], abs=1e-10)


def test_sample_target_basics():
    sq = unit_square()
    sites, masses = sample_target(sq, 1, seed=3, lloyd_iters=30)
    assert np.hypot(*(sites[0] - (0.5, 0.5))) < 0.05
    assert masses[0] == pytest.approx(1.0)

    L = lshape()
    sites, masses = sample_target(L, 1000, seed=7, lloyd_iters=20)
    assert all(point_location(L, s) is Location.INSIDE for s in sites)
    assert masses.sum() == pytest.approx(3.0, rel=1e-9)
    assert (masses > 0).all()


def test_sample_target_lloyd_fixed_point_quarters():
    sites, masses = sample_target(unit_square(), 4, seed=11, lloyd_iters=80)
    got = sorted(map(tuple, np.round(sites, 1)))
    assert got == [(0.2, 0.2), (0.2, 0.8), (0.8, 0.2), (0.8, 0.8)] or all(
        min(np.hypot(*(s - q)) for q in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)])
        < 0.08
        for s in sites
    )
    assert np.allclose(masses, 0.25, atol=0.03)


def test_sample_target_deterministic():
    a = sample_target(lshape(), 60, seed=5, lloyd_iters=5)
    b = sample_target(lshape(), 60, seed=5, lloyd_iters=5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@pytest.fixture(scope="module")
def solved_l50():
    prob = make_problem(square_for(lshape()), lshape(), n=50, seed=13, lloyd_iters=10)
    w, diag, pot = solve_weights(prob, tol=1e-7)
    return prob, w, diag, pot


def test_solve_l50_masses(solved_l50):
    prob, w, diag, _ = solved_l50
    got = cell_masses(diag)
    assert np.abs(got - prob.masses).max() <= 1e-7 * polygon_area(prob.source)
    # Independent area verification through ear-clipped re-triangulation.
    for cell, a in zip(diag.cells, got):
        if len(cell.coords) >= 3:
            poly = Polygon(cell.coords)
            tris = triangulate(poly)
            area = sum(
                0.5
                * abs(
                    (t[1][0] - t[0][0]) * (t[2][1] - t[0][1])
                    - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0])
                )
                for t in tris
            )
            assert area == pytest.approx(a, rel=1e-9)


def test_mass_conservation(solved_l50):
    prob, _, diag, _ = solved_l50
    assert cell_masses(diag).sum() == pytest.approx(polygon_area(prob.source), rel=1e-9)


def test_adjacency_perpendicular(solved_l50):
    _, _, diag, _ = solved_l50
    for i, j, seg in diag.adjacency:
        d = diag.sites[j] - diag.sites[i]
        e = np.asarray(seg.b) - np.asarray(seg.a)
        cosang = abs(d @ e) / (np.hypot(*d) * np.hypot(*e))
        assert cosang < 1e-9


def test_dual_ascent_and_monotone_residual():
    prob = make_problem(square_for(lshape()), lshape(), n=40, seed=2, lloyd_iters=6)
    trace: list = []
    solve_weights(prob, tol=1e-8, trace=trace)
    duals = [dual_objective(prob, rec["weights"]) for rec in trace]
    for a, b in zip(duals[:-1], duals[1:]):
        assert b >= a - 1e-9 * max(1.0, abs(a))
    residuals = [np.abs(rec["masses"] - prob.masses).sum() for rec in trace]
    for a, b in zip(residuals[:-1], residuals[1:]):
        assert b <= a * (1 - 1e-12)
    sums = [rec["masses"].sum() for rec in trace]
    assert np.allclose(sums, polygon_area(prob.source), rtol=1e-9)


def test_dual_gradient_matches_finite_differences():
    rng = np.random.RandomState(4)
    sq = unit_square()
    for trial in range(3):
        sites = rng.uniform(0.1, 0.9, size=(5, 2))
        masses = rng.uniform(0.5, 1.5, size=5)
        masses = masses / masses.sum()
        prob = SemiDiscreteProblem(sq, sites, masses, sq)
        w = rng.normal(0, 0.02, size=5)
        w -= w.mean()
        from polyot.otsolve import _raw_diagram

        _, _, areas = _raw_diagram(sites, w, sq.coords)
        grad = masses - areas
        h = 1e-6
        for j in range(5):
            e = np.zeros(5)
            e[j] = h
            fd = (dual_objective(prob, w + e) - dual_objective(prob, w - e)) / (2 * h)
            assert fd == pytest.approx(grad[j], rel=1e-5, abs=1e-8)


def test_map_point_ties_and_interior(solved_l50):
    _, _, diag, pot = solved_l50
    for i, j, seg in diag.adjacency[:5]:
        mid = 0.5 * (np.asarray(seg.a) + np.asarray(seg.b))
        res = map_point(pot, mid)
        assert res.ambiguous
        assert res.index == min(i, j)
    for idx, cell in enumerate(diag.cells):
        if cell.area > 1e-4:
            res = map_point(pot, cell.centroid)
            assert not res.ambiguous
            assert res.point == pytest.approx(tuple(diag.sites[idx]))
            break


def test_cyclical_monotonicity_pairwise(solved_l50):
    _, _, diag, _ = solved_l50
    pts = []
    for idx, cell in enumerate(diag.cells):
        if cell.area > 1e-4:
            pts.append((np.asarray(cell.centroid), diag.sites[idx]))
        if len(pts) == 12:
            break
    for a, ya in pts:
        for b, yb in pts:
            lhs = ((a - ya) ** 2).sum() + ((b - yb) ** 2).sum()
            rhs = ((a - yb) ** 2).sum() + ((b - ya) ** 2).sum()
            assert lhs <= rhs + 1e-9


def test_ma_measure_of_conjugate_equals_source_area(solved_l50):
    # The conjugate potential is the Alexandrov solution on the target side:
    # its Monge-Ampere atoms sit at the sites and weigh the clipped cells.
    prob, _, _, pot = solved_l50
    conj = legendre(pot.func, prob.source)
    lo = prob.sites.min(axis=0) - 1.0
    hi = prob.sites.max(axis=0) + 1.0
    big = Polygon([(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])])
    total = ma_measure(conj, big)
    assert total == pytest.approx(polygon_area(prob.source), rel=1e-6)


def test_brenier_potential_gradient_structure(solved_l50):
    prob, w, diag, pot = solved_l50
    for idx in range(0, len(diag.cells), 7):
        cell = diag.cells[idx]
        if cell.area < 1e-5:
            continue
        c = np.asarray(cell.centroid)
        assert map_point(pot, c).point == pytest.approx(tuple(prob.sites[idx]))
