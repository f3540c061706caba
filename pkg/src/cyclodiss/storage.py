"""Storage functions as shortest-walk values on a transition graph.

With ``d(a -> b)`` the minimal total weight of a walk from ``a`` to ``b`` (the
empty walk included, so ``d(a -> a) <= 0``):

* available storage          ``S_a(x)  = -min_z d(x -> z)``
* required supply            ``S_r(x)  =  min_z d(z -> x)``
* constrained available      ``S_ac(x) = -d(x -> g)``
* constrained required       ``S_rc(x) =  d(g -> x)``

for a ground node ``g``.  Values are floats in the extended reals: a missing
walk gives ``S_ac = -inf`` / ``S_rc = +inf``; a walk that can wind around a
negative cycle drives the infimum to ``-inf`` (so ``S_a``, ``S_ac`` saturate
at ``+inf`` and ``S_r``, ``S_rc`` at ``-inf``).
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels

NEG_INF = -math.inf
POS_INF = math.inf

# Cycles of weight >= -CYCLE_TOL count as non-negative.  Lossless systems give
# abstractions whose cycles cancel only up to round-off.
CYCLE_TOL = 1e-10


class InternalConsistencyError(RuntimeError):
    pass


class Direction(enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class Kind(enum.Enum):
    AVAILABLE = "S_a"
    REQUIRED = "S_r"
    AVAILABLE_CONSTRAINED = "S_ac"
    REQUIRED_CONSTRAINED = "S_rc"


def tag(value):
    if value == POS_INF:
        return "+inf"
    if value == NEG_INF:
        return "-inf"
    return "fin"


def tags(values):
    return [tag(v) for v in np.asarray(values).tolist()]


@dataclass(frozen=True, eq=False)
class Certificate:
    """A closed walk ``nodes[0] -> ... -> nodes[-1] == nodes[0]``."""

    nodes: tuple
    inputs: tuple
    edges: tuple
    total_weight: float
    passes_through_ground: bool = False

    @property
    def length(self):
        return len(self.edges)

    def with_ground(self, ground):
        hit = ground is not None and ground in self.nodes
        return Certificate(self.nodes, self.inputs, self.edges, self.total_weight, hit)

    def validate(self, graph):
        """Raise ``ValueError`` unless this is a negative closed walk of ``graph``."""
        if self.nodes[0] != self.nodes[-1] or len(self.nodes) != len(self.edges) + 1:
            raise ValueError("certificate is not closed")
        for k, e in enumerate(self.edges):
            if (graph.src[e], graph.inp[e], graph.dst[e]) != \
                    (self.nodes[k], self.inputs[k], self.nodes[k + 1]):
                raise ValueError(f"step {k} is not an edge of the graph")
        if sum(graph.weight[e] for e in self.edges) != self.total_weight:
            raise ValueError("total weight does not match the edge weights")
        if not self.total_weight < 0:
            raise ValueError("certificate weight is not negative")

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"total_weight={self.total_weight!r}\n")
        buf.write("node,input\n")
        for n, i in zip(self.nodes[:-1], self.inputs):
            buf.write(f"{n},{i}\n")
        buf.write(f"{self.nodes[-1]},\n")
        return buf.getvalue()


class WalkResult(NamedTuple):
    dist: np.ndarray
    neg_cycle: Certificate | None
    pred: np.ndarray
    rounds: int


def _cycle_from_pred(pred, s, start, n):
    """Edge ids of the predecessor cycle reached from ``start``, or ``None``."""
    seen = set()
    v = start
    for _ in range(n + 1):
        if v in seen:
            cyc = []
            u = v
            while True:
                e = int(pred[u])
                cyc.append(e)
                u = int(s[e])
                if u == v:
                    return cyc
        seen.add(v)
        e = int(pred[v])
        if e < 0:
            return None
        v = int(s[e])
    return None


def _certificate(graph, edge_ids):
    # order the cycle along the original orientation, starting at its lowest node
    out = {int(graph.src[e]): int(e) for e in edge_ids}
    node = min(out)
    nodes, inputs, edges = [node], [], []
    for _ in range(len(edge_ids)):
        e = out[node]
        edges.append(e)
        inputs.append(int(graph.inp[e]))
        node = int(graph.dst[e])
        nodes.append(node)
    total = sum(graph.weight[e] for e in edges)
    return Certificate(tuple(nodes), tuple(inputs), tuple(edges), float(total))


def _solve(graph, n, s, d, w, source, tol):
    """Bellman-Ford in the working orientation ``s -> d`` over ``n`` nodes."""
    s = np.ascontiguousarray(s, dtype=np.int64)
    d = np.ascontiguousarray(d, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=float)
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    pred = np.full(n, -1, dtype=np.int64)
    rounds, changed = kernels.relax_rounds(n, s, d, w, dist, pred, n, tol)
    cert = None
    if changed.any():
        affected = kernels.closure(n, s, d, changed)
        m = graph.n_edges
        for extra in range(2 * n + 1):
            for v in np.flatnonzero(changed):
                cyc = _cycle_from_pred(pred, s, int(v), n)
                if cyc is not None and max(cyc) < m:
                    cand = _certificate(graph, cyc)
                    if cand.total_weight < 0:
                        cert = cand
                        break
            if cert is not None:
                break
            _, more = kernels.relax_rounds(n, s, d, w, dist, pred, 1, tol)
            changed = changed | more
        if cert is None:
            raise InternalConsistencyError("negative cycle detected but not extracted")
        dist[affected] = -np.inf
    return dist, pred, rounds, cert


def shortest_walks(graph, source, direction=Direction.FORWARD, tol=CYCLE_TOL):
    """Walk infima from ``source`` (FORWARD) or into ``source`` (REVERSE).

    ``dist[v]`` is ``+inf`` when no walk exists and ``-inf`` when a walk can
    traverse a negative cycle; ``neg_cycle`` then carries one such cycle.
    """
    n = graph.n_nodes
    if not 0 <= source < n:
        raise ValueError(f"source node {source} out of range")
    direction = Direction(direction)
    s, d = (graph.src, graph.dst) if direction is Direction.FORWARD else (graph.dst, graph.src)
    dist, pred, rounds, cert = _solve(graph, n, s, d, graph.weight, source, tol)
    return WalkResult(dist, cert, pred, rounds)


def _virtual_pass(graph, direction, tol):
    # extra node n joined to every node by zero-weight edges
    n = graph.n_nodes
    nodes = np.arange(n, dtype=np.int64)
    hub = np.full(n, n, dtype=np.int64)
    if direction is Direction.FORWARD:
        s = np.concatenate([graph.src, hub])
        d = np.concatenate([graph.dst, nodes])
    else:
        s = np.concatenate([graph.dst, hub])
        d = np.concatenate([graph.src, nodes])
    w = np.concatenate([graph.weight, np.zeros(n)])
    dist, pred, rounds, cert = _solve(graph, n + 1, s, d, w, n, tol)
    return WalkResult(dist[:n].copy(), cert, pred[:n].copy(), rounds)


@dataclass(frozen=True, eq=False)
class StorageField:
    kind: Kind
    values: np.ndarray
    ground: int | None
    fingerprint: str
    rounds: int = 0
    neg_cycle: Certificate | None = field(default=None, repr=False)
    coords: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float) + 0.0  # drop negative zeros
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, node):
        return self.values[node]

    def __len__(self):
        return self.values.size

    @property
    def name(self):
        return self.kind.value

    def tags(self):
        return tags(self.values)

    def finite(self):
        return np.isfinite(self.values)

    def to_csv(self):
        buf = io.StringIO()
        n = 0 if self.coords is None else self.coords.shape[1]
        cols = ["node"] + [f"x{i + 1}" for i in range(n)] + ["value", "tag"]
        buf.write(",".join(cols) + "\n")
        for i, v in enumerate(self.values.tolist()):
            xs = [] if self.coords is None else [repr(c) for c in self.coords[i].tolist()]
            buf.write(",".join([str(i), *xs, repr(v), tag(v)]) + "\n")
        return buf.getvalue()


def _make(kind, values, graph, ground, res):
    return StorageField(kind, values, ground, graph.fingerprint(), res.rounds, res.neg_cycle,
                        graph.grid.coords())


def available_storage(graph, tol=CYCLE_TOL):
    """``S_a``: largest supply extractable from each node (``>= 0``)."""
    res = _virtual_pass(graph, Direction.REVERSE, tol)
    return _make(Kind.AVAILABLE, 0.0 - res.dist, graph, None, res)


def required_supply(graph, tol=CYCLE_TOL):
    """``S_r``: least supply needed to arrive at each node (``<= 0``)."""
    res = _virtual_pass(graph, Direction.FORWARD, tol)
    return _make(Kind.REQUIRED, res.dist, graph, None, res)


def constrained_available(graph, ground, tol=CYCLE_TOL):
    """``S_ac``: extractable supply on walks that end at ``ground``."""
    res = shortest_walks(graph, ground, Direction.REVERSE, tol)
    return _make(Kind.AVAILABLE_CONSTRAINED, 0.0 - res.dist, graph, int(ground), res)


def constrained_required(graph, ground, tol=CYCLE_TOL):
    """``S_rc``: supply needed on walks that start at ``ground``."""
    res = shortest_walks(graph, ground, Direction.FORWARD, tol)
    return _make(Kind.REQUIRED_CONSTRAINED, res.dist, graph, int(ground), res)


def closed_walk_through(graph, ground, s_ac):
    """Least weight of a closed walk through ``ground``, capped at 0 (empty walk)."""
    out = graph.src == ground
    if not out.any():
        return 0.0
    # s_ac = -d(v -> ground)
    back = 0.0 - s_ac.values[graph.dst[out]]
    with np.errstate(invalid="ignore"):
        vals = graph.weight[out] + back
    return float(min(0.0, np.min(vals)))


@dataclass(frozen=True, eq=False)
class Verdict:
    cyclo_dissipative: bool
    cyclo_dissipative_wrt_ground: bool
    dissipative: bool
    certificate: Certificate | None
    fields: dict
    ground: int
    closed_walk: float

    def __post_init__(self):
        if self.cyclo_dissipative == (self.certificate is not None):
            raise InternalConsistencyError("certificate must be present exactly when cyclo-dissipativity fails")

    @property
    def S_a(self):
        return self.fields[Kind.AVAILABLE]

    @property
    def S_r(self):
        return self.fields[Kind.REQUIRED]

    @property
    def S_ac(self):
        return self.fields[Kind.AVAILABLE_CONSTRAINED]

    @property
    def S_rc(self):
        return self.fields[Kind.REQUIRED_CONSTRAINED]

    def to_text(self):
        lines = [
            f"cyclo_dissipative={str(self.cyclo_dissipative).lower()}",
            f"cyclo_dissipative_wrt_ground={str(self.cyclo_dissipative_wrt_ground).lower()}",
            f"dissipative={str(self.dissipative).lower()}",
            f"ground={self.ground}",
            f"closed_walk_through_ground={self.closed_walk!r}",
        ]
        if self.certificate is not None:
            c = self.certificate
            lines.append(f"certificate_weight={c.total_weight!r}")
            lines.append(f"certificate_length={c.length}")
            lines.append(f"certificate_through_ground={str(c.passes_through_ground).lower()}")
        return "\n".join(lines) + "\n"


def acrc_holds(s_ac, s_rc, tol=CYCLE_TOL):
    """``S_ac <= S_rc`` at every node in the extended order."""
    with np.errstate(invalid="ignore"):
        return not bool(np.any(s_ac.values > s_rc.values + tol))


def verdict(graph, ground, tol=CYCLE_TOL):
    """Compute the four fields and decide (cyclo-)dissipativity.

    Cyclo-dissipativity with respect to ``ground`` is decided twice, from the
    least closed walk through ``ground`` and from ``S_ac <= S_rc``; the two
    must agree.
    """
    s_a = available_storage(graph, tol)
    s_r = required_supply(graph, tol)
    s_ac = constrained_available(graph, ground, tol)
    s_rc = constrained_required(graph, ground, tol)
    closed = closed_walk_through(graph, ground, s_ac)
    by_walk = closed >= -tol
    by_acrc = acrc_holds(s_ac, s_rc, tol)
    if by_walk != by_acrc:
        raise InternalConsistencyError(
            f"closed-walk test ({by_walk}) and S_ac <= S_rc test ({by_acrc}) disagree at ground {ground}")
    cert = s_r.neg_cycle
    if cert is not None:
        cert = cert.with_ground(ground)
    fields = {f.kind: f for f in (s_a, s_r, s_ac, s_rc)}
    return Verdict(
        cyclo_dissipative=cert is None,
        cyclo_dissipative_wrt_ground=by_walk,
        dissipative=not bool(np.any(s_a.values == POS_INF)),
        certificate=cert,
        fields=fields,
        ground=int(ground),
        closed_walk=closed,
    )
