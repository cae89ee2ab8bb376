import itertools

import numpy as np
import pytest

from polyot.oracle import (
    Assignment,
    SizeMismatch,
    assignment_solve,
    grid_subdifferential,
    partial_flow_solve,
    plan_cost,
)
from polyot.partial import DiscretePlan, InfeasibleMass


def test_assignment_basic():
    a = assignment_solve([(0, 0), (0, 1)], [(1, 0), (1, 1)])
    assert a.permutation == [0, 1]
    assert a.cost == pytest.approx(2.0)


def test_assignment_single():
    a = assignment_solve([(0, 0)], [(3, 4)])
    assert a.permutation == [0]
    assert a.cost == pytest.approx(25.0)


def test_assignment_size_mismatch():
    with pytest.raises(SizeMismatch):
        assignment_solve([(0, 0)], [(1, 1), (2, 2)])


def test_assignment_matches_exhaustive_enumeration():
    rng = np.random.RandomState(0)
    for _ in range(3):
        s = rng.uniform(-1, 1, (8, 2))
        t = rng.uniform(-1, 1, (8, 2))
        got = assignment_solve(s, t)
        best = min(
            sum(((s[i] - t[p[i]]) ** 2).sum() for i in range(8))
            for p in itertools.permutations(range(8))
        )
        assert got.cost == pytest.approx(best, rel=1e-12)


def test_assignment_beats_random_permutations():
    rng = np.random.RandomState(1)
    s = rng.uniform(-1, 1, (30, 2))
    t = rng.uniform(-1, 1, (30, 2))
    opt = assignment_solve(s, t).cost
    for _ in range(1000):
        p = rng.permutation(30)
        assert opt <= sum(((s[i] - t[p[i]]) ** 2).sum() for i in range(30)) + 1e-9


def two_by_two():
    return (
        np.array([(-1.0, 0.0), (-2.0, 0.0)]),
        np.array([1.0, 1.0]),
        np.array([(1.0, 0.0), (2.0, 0.0)]),
        np.array([1.0, 1.0]),
    )


def test_partial_flow_mass_one():
    sp, sw, tp, tw = two_by_two()
    plan = partial_flow_solve(sp, sw, tp, tw, 1.0)
    assert plan.total_mass == pytest.approx(1.0, rel=1e-9)
    assert plan_cost(plan) == pytest.approx(4.0, rel=1e-9)
    (i, j, m0) = plan.couplings[0]
    assert (int(i), int(j)) == (0, 0)


def test_partial_flow_mass_two_prefers_crossing():
    # Full mass: the monotone 1-D pairing (-2 -> 1, -1 -> 2) costs 9 + 9 = 18,
    # beating the nearest-pair completion 4 + 16 = 20.
    sp, sw, tp, tw = two_by_two()
    plan = partial_flow_solve(sp, sw, tp, tw, 2.0)
    assert plan_cost(plan) == pytest.approx(18.0, rel=1e-9)


def test_partial_flow_half_mass_linear():
    sp, sw, tp, tw = two_by_two()
    plan = partial_flow_solve(sp, sw, tp, tw, 0.5)
    assert plan_cost(plan) == pytest.approx(2.0, rel=1e-9)


def test_partial_flow_infeasible():
    sp, sw, tp, tw = two_by_two()
    with pytest.raises(InfeasibleMass):
        partial_flow_solve(sp, sw, tp, tw, 3.0)


def test_partial_flow_cost_monotone_in_mass():
    rng = np.random.RandomState(5)
    sp = rng.uniform(-2, -1, (12, 2))
    tp = rng.uniform(1, 2, (12, 2))
    sw = np.full(12, 1 / 12)
    tw = np.full(12, 1 / 12)
    costs = [
        plan_cost(partial_flow_solve(sp, sw, tp, tw, m)) for m in (0.2, 0.4, 0.6, 0.8, 1.0)
    ]
    assert all(a <= b + 1e-12 for a, b in zip(costs[:-1], costs[1:]))


def test_plan_cost_trivial():
    empty = DiscretePlan(
        source_points=np.empty((0, 2)),
        source_weights=np.empty(0),
        target_points=np.empty((0, 2)),
        target_weights=np.empty(0),
        couplings=np.empty((0, 3)),
    )
    assert plan_cost(empty) == 0.0
    single = DiscretePlan(
        source_points=np.array([(0.0, 0.0)]),
        source_weights=np.array([1.0]),
        target_points=np.array([(3.0, 0.0)]),
        target_weights=np.array([1.0]),
        couplings=np.array([[0.0, 0.0, 1.0]]),
    )
    assert plan_cost(single) == pytest.approx(9.0)


def fine_grid(half, k):
    xs = np.linspace(-half, half, k)
    return np.array([(a, b) for a in xs for b in xs])


def test_grid_subdifferential_ridge():
    hull = grid_subdifferential(lambda p: abs(p[0]), (0, 0), fine_grid(1.0, 21), tol=1e-9)
    xs = hull.coords[:, 0]
    ys = hull.coords[:, 1]
    assert xs.min() == pytest.approx(-1.0, abs=0.06)
    assert xs.max() == pytest.approx(1.0, abs=0.06)
    assert np.abs(ys).max() < 0.06


def test_grid_subdifferential_smooth_quadratic():
    f = lambda p: 0.5 * (p[0] ** 2 + p[1] ** 2)
    x0 = np.array([0.3, -0.2])
    hull = grid_subdifferential(f, x0, x0 + fine_grid(0.5, 21), tol=1e-9)
    assert hull.diameter < 0.25
    # Contains the analytic gradient.
    from polyot.singular import _point_hull_distance

    assert _point_hull_distance(x0, hull) < 0.06


def test_oracle_plans_cyclically_monotone():
    rng = np.random.RandomState(9)
    sp = rng.uniform(-2, -1, (15, 2))
    tp = rng.uniform(1, 2, (15, 2))
    sw = np.full(15, 1 / 15)
    tw = np.full(15, 1 / 15)
    plan = partial_flow_solve(sp, sw, tp, tw, 0.6)
    cpl = plan.couplings
    for a in range(len(cpl)):
        for b in range(len(cpl)):
            ia, ja = int(cpl[a, 0]), int(cpl[a, 1])
            ib, jb = int(cpl[b, 0]), int(cpl[b, 1])
            lhs = ((sp[ia] - tp[ja]) ** 2).sum() + ((sp[ib] - tp[jb]) ** 2).sum()
            rhs = ((sp[ia] - tp[jb]) ** 2).sum() + ((sp[ib] - tp[ja]) ** 2).sum()
            assert lhs <= rhs + 1e-9
