import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cyclodiss.abstraction import (Grid, IntegrationError, TransitionGraph, build_graph,
                                   controllable_set, default_step, reachable_set, rk4, step)
from cyclodiss.model import SupplyRate, SystemModel
from cyclodiss.registry import registry

from conftest import line_graph, zero_supply_model
from oracles import adjacency, bfs, random_graph


# -- grid -----------------------------------------------------------------------

def test_grid_nearest_ties_go_low():
    g = Grid([0.0], [4.0], (5,))
    np.testing.assert_array_equal(g.nearest(np.array([[0.5], [1.5], [1.49], [1.51], [4.0]])),
                                  [0, 1, 1, 2, 4])


def test_grid_node_rejects_outside_points():
    g = Grid([-1.0, 0.0], [1.0, 2.0], (3, 5))
    assert g.node([0.0, 2.0]) == g.index([1, 4])
    with pytest.raises(ValueError, match="outside"):
        g.node([1.5, 0.0])


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(0, 2 ** 31))
def test_grid_index_roundtrip(counts, seed):
    lo = np.zeros(len(counts))
    g = Grid(lo, lo + 1.0, tuple(counts))
    idx = np.random.default_rng(seed).integers(0, g.size, 10)
    np.testing.assert_array_equal(g.index(g.multi_index(idx)), idx)
    np.testing.assert_array_equal(g.nearest(g.coords()[idx]), idx)


# -- step -------------------------------------------------------------------------

def test_step_integrator_exp_line_integral():
    e = registry("integrator-exp")
    x1, w = step(e.model, e.supply, [0.0], [1.0], 0.1)
    assert x1[0] == pytest.approx(0.1, abs=1e-15)
    # Simpson error h^5/2880 e^0.1 ~ 4e-9
    assert abs(w - (math.exp(0.1) - 1.0)) < 1e-8


def test_step_zero_supply_gives_zero_weight():
    model, supply, _ = zero_supply_model()
    for u in (-1.0, 0.0, 1.0):
        _, w = step(model, supply, [0.3], [u], 0.25)
        assert w == 0.0


def test_step_heat_body_equilibrium():
    e = registry("heat-body")
    x1, w = step(e.model, e.supply, [1.0], [0.0], 0.5)
    assert x1[0] == 1.0 and w == 0.0


def test_rk4_reports_nonfinite_rows():
    model = SystemModel(1, 1, 1, lambda x, u: x ** 2 + u, lambda x, u: x, [[-1, 1]], [[0.0]], "blowup")
    supply = SupplyRate(lambda u, y: 0.0 * y[..., 0])
    with pytest.raises(IntegrationError) as err:
        rk4(model, supply, np.array([[0.1], [1e200]]), np.array([[0.0]]), 1.0)
    assert err.value.rows.tolist() == [1]


# -- build_graph ----------------------------------------------------------------

def test_build_graph_integrator_exp_41_nodes():
    _, _, g = line_graph("integrator-exp", 41, h=0.1)
    assert g.n_edges <= 123
    zero_in = g.inp == 1
    np.testing.assert_array_equal(g.src[zero_in], g.dst[zero_in])
    assert not g.weight[zero_in].any()
    # u = +-1 moves exactly one node per step; the only lost edges leave the box
    assert g.out_of_box_count == 2 and g.n_edges == 121


def test_build_graph_single_node_grid_is_all_self_loops():
    e = registry("integrator-exp")
    g = build_graph(e.model, e.supply, Grid([-2.0], [2.0], (1,)), h=0.1)
    assert g.n_edges == 3
    assert np.all(g.src == 0) and np.all(g.dst == 0)


def _leaky_weight(x0, u, h):
    # s = u x - x^2 along x(t) = x0 + u t
    val, _ = quad(lambda t: u * (x0 + u * t) - (x0 + u * t) ** 2, 0.0, h, epsabs=1e-14)
    return val


def test_leaky_two_cycle_is_negative(leaky5):
    _, _, g = leaky5
    coords = g.grid.coords()[:, 0]
    up = [e for e in range(g.n_edges) if g.src[e] == 2 and g.dst[e] == 3]
    down = [e for e in range(g.n_edges) if g.src[e] == 3 and g.dst[e] == 2]
    assert len(up) == len(down) == 1
    wu, wd = g.weight[up[0]], g.weight[down[0]]
    assert wu + wd < 0
    assert wu == pytest.approx(_leaky_weight(coords[2], 1.0, 0.5), abs=1e-12)
    assert wd == pytest.approx(_leaky_weight(coords[3], -1.0, 0.5), abs=1e-12)


def test_refinement_consistency(exp81):
    # Simpson's error on int u e^(x+ut) dt is h^5/2880 |u|^5 e^xi; two substeps cut it 16x
    e, model, g1 = exp81
    g2 = build_graph(model, e.supply, g1.grid, h=g1.h, substeps=2)
    np.testing.assert_array_equal(g1.dst, g2.dst)
    coords = g1.grid.coords()[:, 0]
    u = model.inputs[g1.inp, 0]
    xmax = np.maximum(coords[g1.src], coords[g1.dst])
    predicted = (15 / 16) * g1.h ** 5 / 2880 * np.abs(u) ** 5 * np.exp(xmax)
    diff = np.abs(g1.weight - g2.weight)
    assert np.all(diff <= 10 * predicted + 1e-15)
    assert diff.max() > 0


def test_snap_error_bound_per_edge():
    e = registry("cap-mic")
    grid = Grid.for_model(e.model, (7, 7, 7))
    h = default_step(e.model, grid)
    g = build_graph(e.model, e.supply, grid, h=h)
    x = grid.coords()[g.src]
    u = e.model.inputs[g.inp]
    x_next, w = rk4(e.model, e.supply, x, u, h)
    np.testing.assert_array_equal(w, g.weight)
    gap = np.linalg.norm(grid.coords()[g.dst] - x_next, axis=-1)
    assert np.all(gap <= grid.half_diagonal * (1 + 1e-12))


def test_graph_build_is_deterministic_and_thread_invariant():
    e = registry("cap-mic")
    grid = Grid.for_model(e.model, (6, 6, 6))
    a = build_graph(e.model, e.supply, grid, h=0.05)
    b = build_graph(e.model, e.supply, grid, h=0.05)
    c = build_graph(e.model, e.supply, grid, h=0.05, threads=4, chunk=64)
    assert a.to_csv().encode() == b.to_csv().encode() == c.to_csv().encode()
    assert a.fingerprint() == c.fingerprint()


def test_transition_graph_rejects_duplicate_source_input():
    with pytest.raises(ValueError, match="unique"):
        TransitionGraph.from_edges(2, [(0, 0, 1, 1.0), (0, 0, 0, 2.0)])
    with pytest.raises(ValueError, match="finite"):
        TransitionGraph.from_edges(2, [(0, 0, 1, math.nan)])


# -- reachability -----------------------------------------------------------------

def test_no_edges_masks_are_ground_only():
    g = TransitionGraph.from_edges(4, [])
    assert reachable_set(g, 2).nodes().tolist() == [2]
    assert controllable_set(g, 2).nodes().tolist() == [2]


def test_edges_only_leaving_ground():
    g = TransitionGraph.from_edges(5, [(0, 0, 1, 0.0), (0, 1, 3, 0.0), (2, 0, 4, 0.0)])
    assert reachable_set(g, 0).nodes().tolist() == [0, 1, 3]


def test_integrator_exp_everything_reachable_and_controllable(exp81):
    _, _, g = exp81
    assert reachable_set(g, 40).bits.all()
    assert controllable_set(g, 40).bits.all()


def test_masks_match_double_bfs_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g = random_graph(rng, n_max=12)
        ground = int(rng.integers(g.n_nodes))
        fwd = adjacency(g)
        reach = bfs(fwd, ground)
        ctrl = {v for v in range(g.n_nodes) if ground in bfs(fwd, v)}
        assert set(reachable_set(g, ground).nodes().tolist()) == reach
        assert set(controllable_set(g, ground).nodes().tolist()) == ctrl


def test_mask_csv():
    g = TransitionGraph.from_edges(3, [(0, 0, 1, 0.0)])
    assert reachable_set(g, 0).to_csv() == "node,bit\n0,1\n1,1\n2,0\n"
