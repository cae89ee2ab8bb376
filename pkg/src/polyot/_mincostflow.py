"""Integer min-cost flow for the partial transport plan.

Successive shortest augmenting paths with Johnson potentials on the dense
bipartite graph source_i -> target_j, fed by a super-source (caps = supplies)
and drained by a super-sink (caps = demands).  Exactly K units are routed.
All arithmetic is int64, so feasibility and optimality are exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.int64(2**62)


@njit(cache=True)
def solve_flow(cost, A, B, K):  # pragma: no cover - exercised via wrapper
    ns, nt = cost.shape
    N = ns + nt + 2
    S = ns + nt
    T = ns + nt + 1
    F = np.zeros((ns, nt), dtype=np.int64)
    sent = np.zeros(ns, dtype=np.int64)
    filled = np.zeros(nt, dtype=np.int64)
    pot = np.zeros(N, dtype=np.int64)
    dist = np.empty(N, dtype=np.int64)
    settled = np.empty(N, dtype=np.bool_)
    par = np.empty(N, dtype=np.int64)
    total = np.int64(0)
    while total < K:
        dist[:] = INF
        settled[:] = False
        par[:] = -1
        dist[S] = 0
        while True:
            u = -1
            best = INF
            for v in range(N):
                if not settled[v] and dist[v] < best:
                    best = dist[v]
                    u = v
            if u == -1 or u == T:
                break
            settled[u] = True
            du = dist[u]
            if u == S:
                pS = pot[S]
                for i in range(ns):
                    if sent[i] < A[i]:
                        nd = du + pS - pot[i]
                        if nd < dist[i]:
                            dist[i] = nd
                            par[i] = S
            elif u < ns:
                i = u
                base = du + pot[i]
                for j in range(nt):
                    nd = base + cost[i, j] - pot[ns + j]
                    if nd < dist[ns + j]:
                        dist[ns + j] = nd
                        par[ns + j] = i
            else:
                j = u - ns
                base = du + pot[u]
                for i in range(ns):
                    if F[i, j] > 0:
                        nd = base - cost[i, j] - pot[i]
                        if nd < dist[i]:
                            dist[i] = nd
                            par[i] = u
                if filled[j] < B[j]:
                    nd = base - pot[T]
                    if nd < dist[T]:
                        dist[T] = nd
                        par[T] = u
        if dist[T] >= INF:
            return F, pot, total, np.int64(1)
        dT = dist[T]
        for v in range(N):
            d = dist[v]
            if d > dT:
                d = dT
            pot[v] += d
        delta = K - total
        v = T
        while v != S:
            u = par[v]
            if v == T:
                cap = B[u - ns] - filled[u - ns]
            elif u == S:
                cap = A[v] - sent[v]
            elif u < ns:
                cap = INF
            else:
                cap = F[v, u - ns]
            if cap < delta:
                delta = cap
            v = u
        v = T
        while v != S:
            u = par[v]
            if v == T:
                filled[u - ns] += delta
            elif u == S:
                sent[v] += delta
            elif u < ns:
                F[u, v - ns] += delta
            else:
                F[v, u - ns] -= delta
            v = u
        total += delta
    return F, pot, total, np.int64(0)


def min_cost_partial_flow(cost: np.ndarray, supplies: np.ndarray, demands: np.ndarray, k: int):
    """Route exactly k units; returns (flow, potentials, status).

    status 0: optimal; 1: infeasible (k exceeds routable mass).
    """
    cost = np.ascontiguousarray(cost, dtype=np.int64)
    A = np.ascontiguousarray(supplies, dtype=np.int64)
    B = np.ascontiguousarray(demands, dtype=np.int64)
    F, pot, total, status = solve_flow(cost, A, B, np.int64(k))
    return F, pot, int(status)


def reduced_cost_certificate(cost, F, pot, supplies, demands) -> bool:
    """LP optimality: non-negative reduced costs on all residual arcs and
    complementary slackness on the support (exact integer checks)."""
    ns, nt = cost.shape
    pi = pot[:ns]
    pj = pot[ns : ns + nt]
    rc = cost + pi[:, None] - pj[None, :]
    if (rc < 0).any():
        return False
    if (rc[F > 0] != 0).any():
        return False
    sent = F.sum(axis=1)
    filled = F.sum(axis=0)
    if (sent > supplies).any() or (filled > demands).any() or (F < 0).any():
        return False
    pS, pT = pot[ns + nt], pot[ns + nt + 1]
    # Residual super-source/sink arcs keep non-negative reduced cost:
    # S->i (sent < A): pS - pi >= 0; i->S (sent > 0): pi - pS >= 0;
    # j->T (filled < B): pj - pT >= 0; T->j (filled > 0): pT - pj >= 0.
    if (pi[sent < supplies] > pS).any() or (pi[sent > 0] < pS).any():
        return False
    if (pj[filled < demands] < pT).any() or (pj[filled > 0] > pT).any():
        return False
    return True
