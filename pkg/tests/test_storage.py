import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclodiss.abstraction import TransitionGraph, controllable_set, reachable_set
from cyclodiss.storage import (Direction, Kind, acrc_holds,
                               available_storage, closed_walk_through, constrained_available,
                               constrained_required, required_supply, shortest_walks, tag,
                               verdict)
from cyclodiss.verify import check_die_edges

from conftest import line_graph
from oracles import brute_fields, closed_walk_weights, exact_bits, random_graph


def _line(edges, n=None):
    n = n if n is not None else 1 + max(max(s, d) for s, _, d, _ in edges)
    return TransitionGraph.from_edges(n, edges)


# -- shortest_walks ----------------------------------------------------------------

def test_three_node_line():
    g = _line([(0, 0, 1, 2.0), (1, 0, 2, -1.0)])
    res = shortest_walks(g, 0)
    assert res.dist.tolist() == [0.0, 2.0, 1.0]
    assert res.neg_cycle is None


def test_zero_weights_reachable_set():
    g = _line([(0, 0, 1, 0.0), (1, 0, 0, 0.0), (2, 0, 3, 0.0)], n=4)
    assert shortest_walks(g, 0).dist.tolist() == [0.0, 0.0, math.inf, math.inf]


def test_two_cycle_is_negative():
    g = _line([(0, 0, 1, 1.0), (1, 0, 0, -2.0)])
    res = shortest_walks(g, 0)
    assert res.dist.tolist() == [-math.inf, -math.inf]
    c = res.neg_cycle
    assert c.nodes == (0, 1, 0) and c.total_weight == -1.0
    c.validate(g)


def test_reverse_direction_is_walk_into_source():
    g = _line([(0, 0, 1, 2.0), (1, 0, 2, -1.0)])
    assert shortest_walks(g, 2, Direction.REVERSE).dist.tolist() == [1.0, -1.0, 0.0]


def test_source_out_of_range():
    with pytest.raises(ValueError):
        shortest_walks(_line([(0, 0, 1, 1.0)]), 5)


def test_tag():
    assert [tag(v) for v in (-math.inf, 0.0, math.inf)] == ["-inf", "fin", "+inf"]


# -- fields on the model abstractions ---------------------------------------------------

def test_integrator_exp_fields(exp81):
    _, _, g = exp81
    x = g.grid.coords()[:, 0]
    s_a = available_storage(g).values
    # on the truncated box the extractable supply is exp(x) - exp(-2)
    assert np.max(np.abs(s_a - (np.exp(x) - np.exp(-2.0)))) < 0.05
    s_r = required_supply(g).values
    assert np.max(np.abs(s_r - np.minimum(0.0, np.exp(x) - np.exp(2.0)))) < 0.05
    s_ac = constrained_available(g, 40).values
    s_rc = constrained_required(g, 40).values
    assert np.max(np.abs(s_ac - (np.exp(x) - 1))) < 0.05
    assert np.max(np.abs(s_rc - (np.exp(x) - 1))) < 0.05
    assert s_ac[40] == 0.0 and s_rc[40] == 0.0


def test_required_supply_decreases_as_box_grows():
    vals = []
    for top in (1.0, 2.0, 3.0):
        _, _, g = line_graph("integrator-exp", int(round((top + 2) / 0.05)) + 1, box=(-2.0, top))
        x = g.grid.coords()[:, 0]
        vals.append(required_supply(g).values[np.argmin(np.abs(x - 0.0))])
    assert vals[0] > vals[1] > vals[2]


def test_zero_supply_fields_vanish(zero_graph):
    *_, g = zero_graph
    assert not available_storage(g).values.any()
    assert not required_supply(g).values.any()


def test_two_node_required_supply():
    g = _line([(0, 0, 1, -3.0)])
    assert required_supply(g).values.tolist() == [0.0, -3.0]


def test_leaky_available_storage_infinite_where_cycle_reachable(leaky5):
    _, _, g = leaky5
    ref = brute_fields(g, 2)
    s_a = available_storage(g).values
    assert exact_bits(s_a, ref["S_a"])
    assert np.all(s_a == math.inf)


def test_constrained_conventions():
    g = _line([(0, 0, 1, 1.0), (2, 0, 0, 0.5)], n=4)
    s_ac = constrained_available(g, 0).values
    s_rc = constrained_required(g, 0).values
    assert s_ac.tolist() == [0.0, -math.inf, -0.5, -math.inf]
    assert s_rc.tolist() == [0.0, 1.0, math.inf, math.inf]


def test_field_csv_layout(exp81):
    _, _, g = exp81
    text = constrained_required(g, 40).to_csv().splitlines()
    assert text[0] == "node,x1,value,tag"
    assert text[41] == "40,0.0,0.0,fin"


# -- verdict ---------------------------------------------------------------------------

def test_verdict_integrator_exp(exp81):
    _, _, g = exp81
    v = verdict(g, 40)
    assert v.cyclo_dissipative and v.dissipative and v.cyclo_dissipative_wrt_ground
    assert v.certificate is None


def test_verdict_leaky(leaky21):
    _, _, g = leaky21
    v = verdict(g, 10)
    assert not v.cyclo_dissipative
    v.certificate.validate(g)
    assert v.certificate.total_weight < 0


def test_zero_supply_is_cyclo_lossless(zero_graph):
    *_, g = zero_graph
    assert verdict(g, 10).cyclo_dissipative
    rng = np.random.default_rng(3)
    weights = []
    for node in rng.integers(0, g.n_nodes, 20):
        weights += closed_walk_weights(g, int(node), 4)
    sample = rng.choice(weights, 100)
    assert np.max(np.abs(sample)) <= 1e-12


def test_certificate_csv():
    g = _line([(0, 0, 1, 1.0), (1, 0, 0, -2.0)])
    v = verdict(g, 0)
    assert v.certificate.to_csv() == "total_weight=-1.0\nnode,input\n0,0\n1,0\n0,\n"
    assert v.certificate.passes_through_ground


# -- invariants on random graphs ---------------------------------------------------------

def _ext_le(a, b, tol=0.0):
    with np.errstate(invalid="ignore"):
        return np.all((a <= b + tol) | (a == -math.inf) | (b == math.inf))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_field_invariants(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_max=15)
    ground = int(rng.integers(g.n_nodes))
    v = verdict(g, ground)
    s_a, s_r, s_ac, s_rc = (f.values for f in (v.S_a, v.S_r, v.S_ac, v.S_rc))
    assert _ext_le(s_ac, s_a) and _ext_le(s_r, s_rc)
    assert np.all(s_a >= 0) and np.all(s_r <= 0)
    for f in (v.S_a, v.S_r, v.S_ac, v.S_rc):
        assert check_die_edges(f, g, 1e-9).passed
    reach = reachable_set(g, ground).bits
    ctrl = controllable_set(g, ground).bits
    assert np.all(np.isposinf(s_rc) == ~reach)
    assert np.all(np.isneginf(s_ac) == ~ctrl)
    if v.cyclo_dissipative_wrt_ground:
        assert s_ac[ground] == 0.0 and s_rc[ground] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_brute_force_small_graphs(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_max=6)
    ground = int(rng.integers(g.n_nodes))
    ref = brute_fields(g, ground)
    v = verdict(g, ground)
    for name in ("S_a", "S_r", "S_ac", "S_rc"):
        assert exact_bits(getattr(v, name).values, ref[name]), name


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sandwich_for_edge_feasible_fields(seed):
    # any S satisfying the edge inequality is squeezed between S_ac and S_rc
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_max=10, neg_frac=0.1)
    ground = int(rng.integers(g.n_nodes))
    v = verdict(g, ground)
    if not v.cyclo_dissipative:
        return
    for cand in (v.S_ac, v.S_rc):
        s = cand.values
        both = controllable_set(g, ground).bits & reachable_set(g, ground).bits
        if not np.all(np.isfinite(s[both])):
            continue
        d = s - s[ground]
        assert np.all(v.S_ac.values[both] <= d[both] + 1e-12)
        assert np.all(d[both] <= v.S_rc.values[both] + 1e-12)


def test_closed_walk_and_acrc_tests_agree():
    rng = np.random.default_rng(5)
    for _ in range(50):
        g = random_graph(rng, n_max=12)
        ground = int(rng.integers(g.n_nodes))
        s_ac = constrained_available(g, ground)
        s_rc = constrained_required(g, ground)
        assert (closed_walk_through(g, ground, s_ac) >= -1e-10) == acrc_holds(s_ac, s_rc)


def test_fields_carry_kind_and_fingerprint(exp81):
    _, _, g = exp81
    f = constrained_required(g, 40)
    assert f.kind is Kind.REQUIRED_CONSTRAINED and f.name == "S_rc"
    assert f.fingerprint == g.fingerprint() and f.ground == 40
