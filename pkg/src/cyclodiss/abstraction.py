"""Finite abstraction of a continuous system.

The analysis box is gridded uniformly; every (node, input sample) pair is
integrated over one step ``h`` with RK4 under a zero-order-held input, the
supply integral being carried as an extra state.  The endpoint is snapped to
the nearest node (ties to the lower index) and the pair becomes an edge whose
weight is the integrated supply.  Endpoints outside the box are dropped.
"""

from __future__ import annotations

import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import ModelError

# relative slack (in grid cells) under which a snap is treated as a tie
SNAP_TIE_TOL = 1e-9
BOX_TOL = 1e-9


class IntegrationError(ModelError):
    def __init__(self, message, substep=None, rows=None):
        super().__init__(message)
        self.substep = substep
        self.rows = rows


def _ro(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    lo: np.ndarray
    hi: np.ndarray
    counts: tuple

    def __post_init__(self):
        lo, hi = _ro(self.lo, float).reshape(-1), _ro(self.hi, float).reshape(-1)
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(counts) == 1 and lo.size > 1:
            counts = counts * lo.size
        if not (lo.size == hi.size == len(counts)):
            raise ValueError("lo, hi and counts must have one entry per dimension")
        if any(c < 1 for c in counts):
            raise ValueError(f"node counts must be >= 1, got {counts}")
        if np.any(hi <= lo):
            raise ValueError("grid box needs positive width in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def for_model(cls, model, counts):
        return cls(model.lo, model.hi, counts)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        c = np.asarray(self.counts, float)
        return np.where(c > 1, (self.hi - self.lo) / np.maximum(c - 1, 1), self.hi - self.lo)

    @property
    def half_diagonal(self):
        return 0.5 * float(np.linalg.norm(self.spacing))

    def axis(self, i):
        c = self.counts[i]
        if c == 1:
            return np.array([0.5 * (self.lo[i] + self.hi[i])])
        return np.linspace(self.lo[i], self.hi[i], c)

    def coords(self):
        """``(N, n)`` node coordinates in C (row-major) index order."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def index(self, multi):
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.counts)

    def multi_index(self, idx):
        return np.stack(np.unravel_index(np.asarray(idx), self.counts), axis=-1)

    def inside(self, x):
        x = np.asarray(x, float)
        slack = BOX_TOL * (self.hi - self.lo)
        return np.all((x >= self.lo - slack) & (x <= self.hi + slack), axis=-1)

    def nearest(self, x):
        """Nearest node index of each point (ties toward the lower index), clipped to the box."""
        x = np.asarray(x, float)
        multi = np.empty(x.shape, dtype=np.int64)
        for i, c in enumerate(self.counts):
            if c == 1:
                multi[..., i] = 0
                continue
            t = (x[..., i] - self.lo[i]) / self.spacing[i]
            multi[..., i] = np.clip(np.ceil(t - 0.5 - SNAP_TIE_TOL), 0, c - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.counts)

    def node(self, x):
        """Snap a single in-box point (e.g. a ground state) to its node."""
        x = np.asarray(x, float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"point needs {self.dim} coordinates, got {x.size}")
        if not self.inside(x):
            raise ValueError(f"point {x.tolist()} lies outside the analysis box")
        return int(self.nearest(x))


@dataclass(frozen=True, eq=False)
class TransitionGraph:
    grid: Grid
    src: np.ndarray
    inp: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    inputs: np.ndarray
    h: float = 1.0
    substeps: int = 1
    out_of_box_count: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name, dt in (("src", np.int64), ("inp", np.int64), ("dst", np.int64), ("weight", float)):
            object.__setattr__(self, name, _ro(getattr(self, name), dt))
        object.__setattr__(self, "inputs", _ro(np.atleast_2d(self.inputs), float))
        if not np.all(np.isfinite(self.weight)):
            raise ValueError("edge weights must be finite")
        n = self.n_nodes
        if self.n_edges and (self.src.min() < 0 or self.dst.min() < 0
                             or self.src.max() >= n or self.dst.max() >= n):
            raise ValueError("edge endpoint out of range")
        key = self.src * max(len(self.inputs), 1) + self.inp
        if np.unique(key).size != key.size:
            raise ValueError("(source, input) pairs must be unique")

    @classmethod
    def from_edges(cls, n_nodes, edges, n_inputs=None):
        """Graph on ``n_nodes`` abstract nodes from ``(src, input, dst, weight)`` rows.

        Nodes are laid out on the line ``0..n-1``.  Edges are stored sorted by
        ``(src, input)``.
        """
        rows = sorted((int(s), int(i), int(d), float(w)) for s, i, d, w in edges)
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        if n_inputs is None:
            n_inputs = int(arr[:, 1].max()) + 1 if len(rows) else 1
        grid = Grid([0.0], [float(max(n_nodes - 1, 1))], (n_nodes,))
        return cls(grid, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                   np.arange(n_inputs, dtype=float).reshape(-1, 1))

    @property
    def n_nodes(self):
        return self.grid.size

    @property
    def n_edges(self):
        return int(self.src.size)

    def fingerprint(self):
        h = hashlib.sha256()
        for a in (self.src, self.inp, self.dst, self.weight):
            h.update(a.tobytes())
        h.update(np.asarray(self.grid.counts).tobytes())
        return h.hexdigest()[:16]

    def negated(self):
        """Same graph with every weight negated (supply ``-s``)."""
        return TransitionGraph(self.grid, self.src, self.inp, self.dst, -self.weight,
                               self.inputs, self.h, self.substeps, self.out_of_box_count)

    def edge_lookup(self):
        """``{(src, dst): [edge ids]}``."""
        if "lookup" not in self._cache:
            table = {}
            for e, (s, d) in enumerate(zip(self.src.tolist(), self.dst.tolist())):
                table.setdefault((s, d), []).append(e)
            self._cache["lookup"] = table
        return self._cache["lookup"]

    def to_csv(self):
        buf = io.StringIO()
        buf.write("src,input,dst,weight\n")
        for s, i, d, w in zip(self.src.tolist(), self.inp.tolist(), self.dst.tolist(),
                              self.weight.tolist()):
            buf.write(f"{s},{i},{d},{w!r}\n")
        return buf.getvalue()


# -- integration ---------------------------------------------------------------

def _aug_rhs(model, supply, x, u):
    dx = model.f(x, u)
    ds = supply(u, model.h(x, u))
    return dx, ds


def rk4(model, supply, x, u, h, substeps=1):
    """Batched RK4 of the state and the running supply integral.

    ``x`` has shape ``(..., n)``, ``u`` broadcasts against it.  Returns
    ``(x_next, w)``.  Raises :class:`IntegrationError` naming the sub-step and
    the offending batch rows when a non-finite value appears.
    """
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    x = np.array(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.zeros(x.shape[:-1])
    dt = h / substeps
    with np.errstate(all="ignore"):
        for k in range(substeps):
            k1x, k1s = _aug_rhs(model, supply, x, u)
            k2x, k2s = _aug_rhs(model, supply, x + 0.5 * dt * k1x, u)
            k3x, k3s = _aug_rhs(model, supply, x + 0.5 * dt * k2x, u)
            k4x, k4s = _aug_rhs(model, supply, x + dt * k3x, u)
            x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            w = w + (dt / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            bad = ~(np.all(np.isfinite(x), axis=-1) & np.isfinite(w))
            if np.any(bad):
                raise IntegrationError(f"non-finite state in RK4 sub-step {k}",
                                       substep=k, rows=np.flatnonzero(bad))
    return x, w


def step(model, supply, x, u, h, substeps=1):
    """One RK4 step from a single state: ``(x_next, w)`` with ``w = int s dt``."""
    x_next, w = rk4(model, supply, np.asarray(x, float), np.asarray(u, float), h, substeps)
    return x_next, float(w)


def default_step(model, grid):
    """Smallest grid spacing over the largest ``|f|`` at the box probe points."""
    pts = model.probe_points()
    fmax = 0.0
    for u in model.inputs:
        fmax = max(fmax, float(np.max(np.linalg.norm(model.f(pts, u), axis=-1))))
    dx = float(np.min(grid.spacing))
    return dx / fmax if fmax > 0 else dx


def _build_chunk(model, supply, grid, coords, inputs, nodes, h, substeps):
    k = len(inputs)
    xs = np.repeat(coords[nodes], k, axis=0)
    us = np.tile(inputs, (len(nodes), 1))
    try:
        x_next, w = rk4(model, supply, xs, us, h, substeps)
    except IntegrationError as exc:
        row = int(exc.rows[0])
        node, inp = int(nodes[row // k]), row % k
        raise IntegrationError(
            f"{exc} at node {node} (x={coords[node].tolist()}), input {inp} "
            f"(u={inputs[inp].tolist()})", substep=exc.substep, rows=exc.rows) from None
    src = np.repeat(nodes, k)
    inp = np.tile(np.arange(k), len(nodes))
    keep = grid.inside(x_next)
    x_next, w, src, inp = x_next[keep], w[keep], src[keep], inp[keep]
    dst = grid.nearest(x_next)
    gap = np.linalg.norm(coords[dst] - x_next, axis=-1)
    if gap.size and gap.max() > grid.half_diagonal * (1 + 1e-9) + 1e-12:
        raise AssertionError("snapped endpoint farther than half a grid diagonal")
    return src, inp, dst, w, int((~keep).sum())


def build_graph(model, supply, grid, h=None, substeps=1, threads=1, chunk=4096):
    """Abstract ``model`` on ``grid`` into a :class:`TransitionGraph`."""
    if h is None:
        h = default_step(model, grid)
    coords = grid.coords()
    inputs = np.asarray(model.inputs, float)
    nodes = np.arange(grid.size)
    per = max(1, chunk // max(len(inputs), 1))
    chunks = [nodes[i:i + per] for i in range(0, grid.size, per)]
    job = lambda c: _build_chunk(model, supply, grid, coords, inputs, c, h, substeps)  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    src, inp, dst, w = (np.concatenate([p[i] for p in parts]) for i in range(4))
    dropped = sum(p[4] for p in parts)
    return TransitionGraph(grid, src, inp, dst, w, inputs, float(h), int(substeps), dropped)


# -- reachability ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NodeMask:
    bits: np.ndarray
    kind: str
    ground: int

    def __contains__(self, node):
        return bool(self.bits[node])

    def nodes(self):
        return np.flatnonzero(self.bits)

    def to_csv(self):
        lines = ["node,bit"] + [f"{i},{int(b)}" for i, b in enumerate(self.bits.tolist())]
        return "\n".join(lines) + "\n"


def _closure_from(graph, ground, reverse):
    if not 0 <= ground < graph.n_nodes:
        raise ValueError(f"ground node {ground} out of range")
    seeds = np.zeros(graph.n_nodes, dtype=np.bool_)
    seeds[ground] = True
    s, d = (graph.dst, graph.src) if reverse else (graph.src, graph.dst)
    return kernels.closure(graph.n_nodes, np.ascontiguousarray(s), np.ascontiguousarray(d), seeds)


def reachable_set(graph, ground):
    """Nodes reachable from ``ground`` (``ground`` included)."""
    return NodeMask(_closure_from(graph, ground, False), "reachable", int(ground))


def controllable_set(graph, ground):
    """Nodes from which ``ground`` can be reached (``ground`` included)."""
    return NodeMask(_closure_from(graph, ground, True), "controllable", int(ground))
