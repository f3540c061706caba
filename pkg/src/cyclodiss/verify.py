"""Numerical checks of dissipation inequalities and storage-function bounds.

Every check returns a :class:`CheckReport` whose ``margin`` is the worst
signed violation (``<= tol`` passes).  Candidates may be a
:class:`~cyclodiss.storage.StorageField`, a
:class:`~cyclodiss.model.CandidateStorage` (evaluated at the grid nodes), or a
plain array of node values.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .model import CandidateStorage, fd_gradient
from .storage import (
    CYCLE_TOL,
    Direction,
    InternalConsistencyError,
    StorageField,
    available_storage,
    constrained_available,
    constrained_required,
    shortest_walks,
)
from .abstraction import reachable_set

FIELD_TOL = 1e-9
DIFFERENTIAL_TOL = 1e-7
CROSS_GROUND_TOL = 1e-9
# multiplies the sampled Lipschitz constant; samples underestimate the sup
LIPSCHITZ_SAFETY = 1.1


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    margin: float
    witness: str
    tol: float
    seed: int | None = None
    note: str = ""
    details: dict = field(default_factory=dict, compare=False)

    def to_line(self):
        seed = "none" if self.seed is None else str(self.seed)
        line = (f"check={self.name} passed={str(self.passed).lower()} margin={self.margin!r} "
                f"witness={self.witness} seed={seed} tol={self.tol!r}")
        if self.note:
            line += " note=" + self.note.replace(" ", "_")
        return line

    def same_outcome(self, other):
        return (self.passed, self.margin, self.witness) == (other.passed, other.margin, other.witness)


def _report(name, margin, witness, tol, **kw):
    return CheckReport(name, bool(margin <= tol), float(margin), witness, float(tol), **kw)


def node_values(candidate, graph):
    if isinstance(candidate, StorageField):
        return np.asarray(candidate.values, float)
    if isinstance(candidate, CandidateStorage):
        return np.asarray(candidate(graph.grid.coords()), float).reshape(graph.n_nodes)
    vals = np.asarray(candidate, float)
    if vals.shape != (graph.n_nodes,):
        raise ValueError(f"expected {graph.n_nodes} node values, got shape {vals.shape}")
    return vals


def lipschitz_estimate(candidate, graph, n_samples=256, seed=0):
    """Largest gradient norm of ``candidate`` over the grid nodes and a Halton sample."""
    grid = graph.grid
    pts = grid.coords()
    if n_samples:
        sample = qmc.Halton(d=grid.dim, seed=seed).random(n_samples)
        pts = np.vstack([pts, qmc.scale(sample, grid.lo, grid.hi)])
    g = candidate.grad(pts)
    return float(np.max(np.linalg.norm(np.asarray(g).reshape(len(pts), -1), axis=-1)))


def discretization_budget(candidate, graph, seed=0):
    """Per-edge slack for a continuous candidate: snapping moves an endpoint by at
    most half a grid diagonal, so ``S`` moves by at most ``L`` times that."""
    if not isinstance(candidate, CandidateStorage):
        return FIELD_TOL
    L = lipschitz_estimate(candidate, graph, seed=seed)
    return LIPSCHITZ_SAFETY * L * graph.grid.half_diagonal + FIELD_TOL


def _edge_witness(graph, e):
    return f"edge:{e}({graph.src[e]}->{graph.dst[e]},u{graph.inp[e]})"


def check_die_edges(candidate, graph, tol=None, reverse=False):
    """``S(dst) <= S(src) + w`` on every edge.

    Extended values follow the implications ``S(dst) = +inf => S(src) = +inf``
    and ``S(src) = -inf => S(dst) = -inf``.  With ``reverse=True`` the reversed
    inequality ``S(dst) >= S(src) + w`` is checked instead.
    """
    vals = node_values(candidate, graph)
    if tol is None:
        tol = discretization_budget(candidate, graph)
    w = graph.weight
    if reverse:
        vals, w = -vals, -w
    a, b = vals[graph.src], vals[graph.dst]
    margins = np.full(graph.n_edges, -np.inf)
    fin = np.isfinite(a) & np.isfinite(b)
    margins[fin] = b[fin] - a[fin] - w[fin]
    bad = ((b == np.inf) & (a != np.inf)) | ((a == -np.inf) & (b != -np.inf))
    margins[bad] = np.inf
    if graph.n_edges == 0:
        return _report("die_edges", 0.0, "none", tol)
    e = int(np.argmax(margins))
    margin = float(margins[e])
    if margin == -np.inf:
        return _report("die_edges", 0.0, "none", tol, note="no finite edge pair")
    return _report("die_edges", margin, _edge_witness(graph, e), tol)


def _box_samples(model, n_samples, seed):
    lo_u, hi_u = model.input_hull()
    lo = np.concatenate([model.lo, lo_u])
    hi = np.concatenate([model.hi, hi_u])
    z = qmc.Halton(d=lo.size, seed=seed).random(n_samples)
    pts = lo + z * (hi - lo)
    return pts[:, : model.state_dim], pts[:, model.state_dim:]


def check_die_differential(model, supply, candidate, n_samples=1000, seed=42,
                           tol=DIFFERENTIAL_TOL, reverse=False):
    """``dS/dx . f(x, u) <= s(u, h(x, u))`` on low-discrepancy samples of box x input hull."""
    x, u = _box_samples(model, n_samples, seed)
    grad = np.asarray(candidate.grad(x), float).reshape(x.shape)
    sdot = np.sum(grad * model.f(x, u), axis=-1)
    s = supply(u, model.h(x, u))
    if reverse:
        sdot, s = -sdot, -s
    margins = sdot - s
    i = int(np.argmax(margins))
    witness = f"x={x[i].tolist()},u={u[i].tolist()}".replace(" ", "")
    return _report("die_differential", float(margins[i]), witness, tol, seed=seed,
                   details={"max_abs": float(np.max(np.abs(margins)))})


def check_gradient(candidate, model, n_samples=256, seed=42, rtol=1e-6):
    """Central finite differences against the analytic gradient (relative error)."""
    if candidate.gradient is None:
        return CheckReport("gradient", True, 0.0, "none", rtol, seed, "no analytic gradient")
    x, _ = _box_samples(model, n_samples, seed)
    g = np.asarray(candidate.grad(x), float).reshape(x.shape)
    fd = fd_gradient(candidate.eval, x)
    scale = np.maximum(np.linalg.norm(g, axis=-1), 1e-12)
    err = np.linalg.norm(fd - g, axis=-1) / scale
    i = int(np.argmax(err))
    return _report("gradient", float(err[i]), f"x={x[i].tolist()}".replace(" ", ""), rtol,
                   seed=seed)


def _worst(pairs):
    # pairs of (name, margins array); returns (margin, side, node)
    best = (-np.inf, "none", -1)
    for side, m in pairs:
        if m.size and np.nanmax(m) > best[0]:
            i = int(np.nanargmax(m))
            best = (float(m[i]), side, i)
    return best


def _bound_margins(lower, value, upper=None):
    """Margins of ``lower <= value`` where ``lower`` is finite."""
    m = np.full(value.shape, -np.inf)
    ok = np.isfinite(lower) & np.isfinite(value)
    m[ok] = lower[ok] - value[ok]
    return m


def _walk_budget(candidate, graph, fields, tol):
    if tol is not None:
        return tol
    hops = max(max(f.rounds for f in fields), 1)
    return discretization_budget(candidate, graph) * hops if isinstance(candidate, CandidateStorage) \
        else FIELD_TOL * hops


def check_sandwich(s_ac, s_rc, candidate, ground, graph, tol=None):
    """``S_ac(x) <= S(x) - S(x*) <= S_rc(x)`` wherever the bound is finite."""
    vals = node_values(candidate, graph)
    d = vals - vals[ground]
    tol = _walk_budget(candidate, graph, (s_ac, s_rc), tol)
    left = _bound_margins(s_ac.values, d)
    right = _bound_margins(d, s_rc.values)
    margin, side, node = _worst([("left", left), ("right", right)])
    details = {"left": float(np.max(left)) if left.size else 0.0,
               "right": float(np.max(right)) if right.size else 0.0}
    if margin == -np.inf:
        return _report("sandwich", 0.0, "none", tol, details=details, note="no finite bound")
    return _report("sandwich", margin, f"node:{node}({side})", tol, details=details)


def check_extremality(s_a, s_r, s_ac, s_rc, candidate, ground, graph, tol=None):
    """Extremality of the four storage functions against a candidate.

    A nonnegative candidate is checked against ``S_a <= S - min S`` and
    ``S - S(x*) <= S_rc``, a nonpositive one against ``S_r >= S - max S`` and
    ``S - S(x*) >= S_ac``.  On a finite grid every candidate is bounded, so an
    indefinite one is checked against all four through its shifts.
    """
    vals = node_values(candidate, graph)
    tol = _walk_budget(candidate, graph, (s_a, s_r, s_ac, s_rc), tol)
    d = vals - vals[ground]
    nonneg, nonpos = bool(np.all(vals >= 0)), bool(np.all(vals <= 0))
    pairs = []
    if nonneg or not nonpos:
        pairs.append(("S_a<=S-minS", _bound_margins(s_a.values, vals - vals.min())))
        pairs.append(("S-S*<=S_rc", _bound_margins(d, s_rc.values)))
    if nonpos or not nonneg:
        pairs.append(("S_r>=S-maxS", _bound_margins(vals - vals.max(), s_r.values)))
        pairs.append(("S-S*>=S_ac", _bound_margins(s_ac.values, d)))
    details = {k: float(np.max(m)) for k, m in pairs}
    margin, side, node = _worst(pairs)
    sign = "nonnegative" if nonneg else "nonpositive" if nonpos else "indefinite"
    details["grid_inf_S_a"] = float(np.min(s_a.values))
    if margin == -np.inf:
        return _report("extremality", 0.0, "none", tol, note=f"{sign} candidate; no finite bound",
                       details=details)
    return _report("extremality", margin, f"node:{node}({side})", tol, note=f"{sign} candidate",
                   details=details)


def check_cross_ground(graph, ground_a, ground_b, tol=CROSS_GROUND_TOL):
    """``S^a_ac(b) + S^b_ac(a) <= 0`` and ``S^a_rc(b) + S^b_rc(a) >= 0``."""
    ac_a = constrained_available(graph, ground_a)
    ac_b = constrained_available(graph, ground_b)
    rc_a = constrained_required(graph, ground_a)
    rc_b = constrained_required(graph, ground_b)
    with np.errstate(invalid="ignore"):
        ac_sum = float(ac_a.values[ground_b] + ac_b.values[ground_a])
        rc_sum = float(rc_a.values[ground_b] + rc_b.values[ground_a])
    details = {"ac_sum": ac_sum, "rc_sum": rc_sum}
    if math.isnan(ac_sum) or math.isnan(rc_sum):
        return CheckReport("cross_ground", False, math.inf, f"grounds:{ground_a},{ground_b}", tol,
                           note="sum of opposite infinities", details=details)
    margin, witness = (ac_sum, "ac") if ac_sum >= -rc_sum else (-rc_sum, "rc")
    return _report("cross_ground", margin, f"{witness}(grounds:{ground_a},{ground_b})", tol,
                   details=details)


def check_convexity(candidate_1, candidate_2, lam, graph, tol=None):
    """``lam S1 + (1 - lam) S2`` satisfies the edge inequality when S1 and S2 do."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    t1 = discretization_budget(candidate_1, graph) if tol is None else tol
    t2 = discretization_budget(candidate_2, graph) if tol is None else tol
    r1 = check_die_edges(candidate_1, graph, t1)
    r2 = check_die_edges(candidate_2, graph, t2)
    combo_tol = max(t1, t2)
    if not (r1.passed and r2.passed):
        which = "S1" if not r1.passed else "S2"
        return CheckReport("convexity", False, max(r1.margin, r2.margin), which, combo_tol,
                           note="precondition unmet: a candidate fails the edge inequality")
    v1, v2 = node_values(candidate_1, graph), node_values(candidate_2, graph)
    if lam == 0.0:
        combo = v2
    elif lam == 1.0:
        combo = v1
    else:
        with np.errstate(invalid="ignore"):
            combo = lam * v1 + (1.0 - lam) * v2
        if np.any(np.isnan(combo)):
            raise ValueError("convex combination mixes +inf and -inf")
    r = check_die_edges(combo, graph, combo_tol)
    return CheckReport("convexity", r.passed, r.margin, r.witness, combo_tol,
                       note=f"lambda={lam:g}")


def _bfs_path(graph, start, targets):
    parent = {start: None}
    queue = deque([start])
    out = {}
    for e in range(graph.n_edges):
        out.setdefault(int(graph.src[e]), []).append(int(graph.dst[e]))
    while queue:
        v = queue.popleft()
        if v in targets:
            path = [v]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for t in out.get(v, ()):
            if t not in parent:
                parent[t] = v
                queue.append(t)
    return None


def check_external(graph, ground, tol=FIELD_TOL):
    """Least supply over walks leaving ``ground`` is non-negative.

    Meaningful when ``S_a(ground) = 0``; for a finite positive ``S_a(ground)``
    the check is reported as passed with a ``precondition unmet`` note.
    """
    res = shortest_walks(graph, ground, Direction.FORWARD, CYCLE_TOL)
    reach = reachable_set(graph, ground)
    s_a = available_storage(graph)
    dissipative = not bool(np.any(s_a.values == np.inf))
    if res.neg_cycle is not None:
        cyc = res.neg_cycle
        path = _bfs_path(graph, ground, set(cyc.nodes))
        k = cyc.nodes.index(path[-1])
        loop = cyc.nodes[k:-1] + cyc.nodes[:k + 1]
        witness = "walk:" + "->".join(map(str, path)) + "|cycle:" + "->".join(map(str, loop))
        return CheckReport("external", False, math.inf, witness, tol,
                           note="supply from ground unbounded below",
                           details={"dissipative": dissipative})
    dist = res.dist[np.isfinite(res.dist)]
    least = float(np.min(dist))
    node = int(np.flatnonzero(res.dist == least)[0])
    sa_ground = -least
    details = {"S_a_ground": sa_ground, "dissipative": dissipative,
               "reachable_all": bool(reach.bits.all())}
    if sa_ground > tol:
        return CheckReport("external", True, 0.0, f"node:{node}", tol,
                           note=f"precondition unmet: S_a(ground)={sa_ground:.6g}", details=details)
    if reach.bits.all() and not dissipative:
        raise InternalConsistencyError("external characterization disagrees with dissipativity verdict")
    return _report("external", sa_ground, f"node:{node}", tol, details=details)
