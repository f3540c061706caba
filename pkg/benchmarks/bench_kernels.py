"""Time the numba and numpy relaxation kernels on the same graphs.

    python benchmarks/bench_kernels.py [--nodes 2000 8000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from cyclodiss import kernels
from cyclodiss.abstraction import Grid, build_graph
from cyclodiss.registry import registry


def _graph(nodes):
    e = registry("integrator-exp")
    grid = Grid.for_model(e.model, (nodes,))
    return build_graph(e.model, e.supply, grid, h=grid.spacing[0])


def _time(fn, g, repeat):
    n = g.n_nodes
    src, dst, w = (np.ascontiguousarray(a) for a in (g.src, g.dst, g.weight))
    best, out = np.inf, None
    for _ in range(repeat):
        dist = np.full(n, np.inf)
        dist[n // 2] = 0.0
        pred = np.full(n, -1, dtype=np.int64)
        t0 = time.perf_counter()
        rounds, _ = fn(n, src, dst, w, dist, pred, n, 1e-10)
        best = min(best, time.perf_counter() - t0)
        out = (rounds, dist)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    g0 = _graph(16)
    _time(kernels.relax_rounds_numba, g0, 1)  # compile outside the timing
    print(f"{'nodes':>8} {'edges':>8} {'rounds':>7} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for nodes in args.nodes:
        g = _graph(nodes)
        t_nb, (r_nb, d_nb) = _time(kernels.relax_rounds_numba, g, args.repeat)
        t_np, (r_np, d_np) = _time(kernels.relax_rounds_numpy, g, args.repeat)
        assert r_nb == r_np and d_nb.tobytes() == d_np.tobytes()
        print(f"{nodes:>8} {g.n_edges:>8} {r_nb:>7} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>8.1f}")


if __name__ == "__main__":
    main()
