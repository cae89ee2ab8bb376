"""Independent brute-force references for cross-checking the main solvers.

Exactness beats speed here: dense structures, integer-scaled costs, library
routines with different internals than the production path (augmenting-path
assignment, network simplex).  Instance sizes are capped at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import ConvexPolygon, convex_hull
from .partial import COST_SCALE, MASS_BITS, DiscretePlan, InfeasibleMass

ORACLE_CAP = 2000


class OracleError(Exception):
    pass


class SizeMismatch(OracleError):
    pass


@dataclass(frozen=True)
class Assignment:
    permutation: list[int]
    cost: float


def assignment_solve(sources, targets) -> Assignment:
    """Globally optimal assignment for squared-distance cost."""
    s = np.asarray(sources, float).reshape(-1, 2)
    t = np.asarray(targets, float).reshape(-1, 2)
    if len(s) != len(t):
        raise SizeMismatch(f"{len(s)} sources vs {len(t)} targets")
    if len(s) > ORACLE_CAP:
        raise SizeMismatch(f"oracle capped at {ORACLE_CAP} points")
    d2 = ((s[:, None, :] - t[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(d2)
    perm = np.empty(len(s), dtype=int)
    perm[rows] = cols
    return Assignment(permutation=perm.tolist(), cost=float(d2[rows, cols].sum()))


def partial_flow_solve(
    source_points,
    source_weights,
    target_points,
    target_weights,
    m: float,
) -> DiscretePlan:
    """Exact optimal partial plan by network simplex on the integer instance.

    Uses the same integer scaling as the production flow solver so costs are
    directly comparable.
    """
    sp = np.asarray(source_points, float).reshape(-1, 2)
    tp = np.asarray(target_points, float).reshape(-1, 2)
    sw = np.asarray(source_weights, float).reshape(-1)
    tw = np.asarray(target_weights, float).reshape(-1)
    if len(sp) + len(tp) > ORACLE_CAP:
        raise SizeMismatch(f"oracle capped at {ORACLE_CAP} points total")
    if m > min(sw.sum(), tw.sum()) * (1 + 1e-12):
        raise InfeasibleMass(f"mass {m} exceeds available {min(sw.sum(), tw.sum())}")

    mscale = MASS_BITS / max(sw.sum(), tw.sum())
    A = np.round(sw * mscale).astype(np.int64)
    B = np.round(tw * mscale).astype(np.int64)
    K = int(min(round(m * mscale), A.sum(), B.sum()))
    d2 = ((sp[:, None, :] - tp[None, :, :]) ** 2).sum(axis=2)
    cost = np.round(d2 * COST_SCALE).astype(np.int64)

    g = nx.DiGraph()
    g.add_node("S", demand=-K)
    g.add_node("T", demand=K)
    for i in range(len(sp)):
        g.add_node(("s", i), demand=0)
        g.add_edge("S", ("s", i), capacity=int(A[i]), weight=0)
    for j in range(len(tp)):
        g.add_node(("t", j), demand=0)
        g.add_edge(("t", j), "T", capacity=int(B[j]), weight=0)
    for i in range(len(sp)):
        for j in range(len(tp)):
            g.add_edge(("s", i), ("t", j), weight=int(cost[i, j]))
    _, flow = nx.network_simplex(g)
    rows = []
    for i in range(len(sp)):
        for node, f in flow[("s", i)].items():
            if f > 0:
                rows.append((float(i), float(node[1]), f / mscale))
    couplings = np.array(rows).reshape(-1, 3)
    return DiscretePlan(
        source_points=sp,
        source_weights=sw,
        target_points=tp,
        target_weights=tw,
        couplings=couplings,
    )


def plan_cost(plan: DiscretePlan) -> float:
    """Total quadratic cost sum mass * |x - y|^2 of a feasible plan."""
    return plan.cost()


def grid_subdifferential(f, x0, grid, tol: float, p_resolution: int = 41) -> ConvexPolygon:
    """Definition-level subdifferential: hull of the slope lattice points p
    with f(y) >= f(x0) + p.(y - x0) - tol for every grid point y."""
    x0 = np.asarray(x0, float)
    grid = np.asarray(grid, float).reshape(-1, 2)
    fx0 = float(f(x0))
    vals = np.array([float(f(y)) for y in grid])
    dy = grid - x0
    nrm = np.hypot(*dy.T)
    ok = nrm > 1e-12
    if not ok.any():
        raise OracleError("grid does not surround x0")
    slope_bound = 1.2 * float(np.abs((vals[ok] - fx0) / nrm[ok]).max()) + 1e-6
    ps = np.linspace(-slope_bound, slope_bound, p_resolution)
    px, py = np.meshgrid(ps, ps)
    cand = np.c_[px.ravel(), py.ravel()]
    # feasible iff min over grid of (f(y) - f(x0) - p.(y-x0)) >= -tol
    margins = vals[None, :] - fx0 - cand @ dy.T
    feas = cand[margins.min(axis=1) >= -tol]
    return convex_hull(feas) if len(feas) else ConvexPolygon(np.empty((0, 2)))
