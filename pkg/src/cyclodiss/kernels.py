"""Hot loops of the shortest-walk engine.

Two interchangeable implementations of each kernel live here: a numba one
(``*_numba``) and a vectorised numpy one (``*_numpy``).  They are required to
produce bitwise identical results; ``relax_rounds`` and ``closure`` dispatch
on :data:`cyclodiss._accel.USE_NUMBA`.

Relaxation is round-synchronous (Jacobi): every round reads the distances of
the previous round only.  An edge ``e = (s -> d)`` improves ``d`` when
``dist[s] + w[e] < dist[d] - tol``; among improving edges of one target the
smallest candidate wins and equal candidates go to the lowest edge index.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


@njit
def relax_rounds_numba(n, src, dst, w, dist, pred, max_rounds, tol):
    m = src.shape[0]
    new = dist.copy()
    newpred = pred.copy()
    changed = np.zeros(n, dtype=np.bool_)
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        for v in range(n):
            changed[v] = False
            new[v] = dist[v]
            newpred[v] = pred[v]
        improved = False
        for e in range(m):
            s = src[e]
            d = dst[e]
            c = dist[s] + w[e]
            if c < dist[d] - tol and c < new[d]:
                new[d] = c
                newpred[d] = e
                changed[d] = True
                improved = True
        for v in range(n):
            dist[v] = new[v]
            pred[v] = newpred[v]
        if not improved:
            break
    return rounds, changed


def relax_rounds_numpy(n, src, dst, w, dist, pred, max_rounds, tol):
    m = src.shape[0]
    edge_ids = np.arange(m, dtype=np.int64)
    changed = np.zeros(n, dtype=np.bool_)
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        cand = dist[src] + w
        ok = cand < dist[dst] - tol
        if not ok.any():
            changed = np.zeros(n, dtype=np.bool_)
            break
        e_ok = edge_ids[ok]
        d_ok = dst[ok]
        c_ok = cand[ok]
        best = np.full(n, np.inf)
        np.minimum.at(best, d_ok, c_ok)
        winners = c_ok == best[d_ok]
        first = np.full(n, m, dtype=np.int64)
        np.minimum.at(first, d_ok[winners], e_ok[winners])
        changed = first < m
        dist[changed] = best[changed]
        pred[changed] = first[changed]
    return rounds, changed


@njit
def closure_numba(n, src, dst, seeds):
    # CSR adjacency, then a plain queue BFS
    m = src.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for e in range(m):
        counts[src[e] + 1] += 1
    for v in range(n):
        counts[v + 1] += counts[v]
    fill = counts[:-1].copy()
    adj = np.empty(m, dtype=np.int64)
    for e in range(m):
        adj[fill[src[e]]] = dst[e]
        fill[src[e]] += 1
    mask = seeds.copy()
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for v in range(n):
        if mask[v]:
            queue[tail] = v
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(counts[v], counts[v + 1]):
            t = adj[k]
            if not mask[t]:
                mask[t] = True
                queue[tail] = t
                tail += 1
    return mask


def closure_numpy(n, src, dst, seeds):
    mask = seeds.copy()
    while True:
        frontier = mask[src] & ~mask[dst]
        if not frontier.any():
            return mask
        mask[dst[frontier]] = True


def relax_rounds(n, src, dst, w, dist, pred, max_rounds, tol):
    """Run up to ``max_rounds`` Jacobi rounds in place.

    Returns ``(rounds, changed)`` where ``changed`` flags the nodes improved in
    the last executed round (all false when the iteration converged).
    """
    fn = relax_rounds_numba if USE_NUMBA else relax_rounds_numpy
    return fn(n, src, dst, w, dist, pred, max_rounds, tol)


def closure(n, src, dst, seeds):
    """Forward closure of the boolean ``seeds`` mask along ``src -> dst``."""
    fn = closure_numba if USE_NUMBA else closure_numpy
    return fn(n, src, dst, seeds)
