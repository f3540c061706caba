import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclodiss.model import (ConfigError, ModelError, SupplyRate, ValidationError, eval_output,
                             eval_supply, load_model)
from cyclodiss.registry import KEYS, registry
from cyclodiss.verify import check_die_differential, check_gradient

from conftest import CONFIGS


def _config(**over):
    doc = json.loads((CONFIGS / "integrator_exp.json").read_text())
    doc.update(over)
    return json.dumps(doc)


def test_load_integrator_exp():
    model, supply, storage = load_model(_config())
    assert (model.state_dim, model.input_dim, model.output_dim) == (1, 1, 1)
    assert eval_supply(supply, model, [0.0], [1.0]) == 1.0
    assert storage([1.0]) == pytest.approx(np.e - 1)


def test_empty_input_set_is_a_schema_error():
    with pytest.raises(ConfigError, match="schema"):
        load_model(_config(input_grid={"list": []}))


def test_load_cap_mic_config_matches_builtin():
    model, supply, storage = load_model((CONFIGS / "cap_mic.json").read_text())
    assert (model.state_dim, model.input_dim) == (3, 2)
    ref = registry("cap-mic")
    rng = np.random.default_rng(0)
    x = rng.uniform(model.lo, model.hi, size=(50, 3))
    u = rng.uniform(-1, 1, size=(50, 2))
    np.testing.assert_allclose(model.f(x, u), ref.model.f(x, u), rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(supply(u, model.h(x, u)), ref.supply(u, ref.model.h(x, u)),
                               rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(storage(x), ref.known_storage(x), rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("bad, exc", [
    ("{not json", ConfigError),
    (_config(dynamics=["u1", "u1"]), ConfigError),
    (_config(state_bounds=[[1, -1]]), ConfigError),
    (_config(supply="u1*y2"), ConfigError),
    (_config(output=["ln(x1)"]), ValidationError),
])
def test_config_errors(bad, exc):
    with pytest.raises(exc):
        load_model(bad)


def test_registry_examples():
    e = registry("integrator-exp")
    assert e.known_storage([1.0]) == pytest.approx(np.e - 1, abs=1e-12)
    assert e.known_storage([0.0]) == 0.0
    with pytest.raises(ModelError):
        registry("no-such-model")


def test_registry_is_deterministic():
    for key in KEYS:
        a, b = registry(key), registry(key)
        assert (a.key, a.notes, a.default_grid, a.default_ground) == \
            (b.key, b.notes, b.default_grid, b.default_ground)
        np.testing.assert_array_equal(a.model.state_bounds, b.model.state_bounds)
        np.testing.assert_array_equal(a.model.inputs, b.model.inputs)
        x = a.model.probe_points()
        for u in a.model.inputs:
            np.testing.assert_array_equal(a.model.f(x, np.broadcast_to(u, (len(x), u.size))),
                                          b.model.f(x, np.broadcast_to(u, (len(x), u.size))))


def test_eval_supply_examples():
    e = registry("integrator-exp")
    assert eval_supply(e.supply, e.model, [0.0], [1.0]) == 1.0
    zero = SupplyRate(lambda u, y: 0.0 * u[..., 0], "zero")
    assert eval_supply(zero, e.model, [0.3], [1.0]) == 0.0
    heat = registry("heat-body")
    assert eval_supply(heat.supply, heat.model, [1.0], [2.0]) == -2.0


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(KEYS), st.integers(0, 2 ** 31))
def test_eval_supply_is_composition(key, seed):
    e = registry(key)
    rng = np.random.default_rng(seed)
    x = rng.uniform(e.model.lo, e.model.hi)
    u = e.model.inputs[rng.integers(len(e.model.inputs))]
    assert eval_supply(e.supply, e.model, x, u) == e.supply(u, eval_output(e.model, x, u))


@pytest.mark.parametrize("key", [k for k in KEYS if registry(k).known_storage is not None])
def test_known_storage_satisfies_differential_inequality(key):
    e = registry(key)
    tol = 1e-9 if key == "integrator-exp" else 1e-7
    r = check_die_differential(e.model, e.supply, e.known_storage, n_samples=1000, tol=tol)
    assert r.passed, r.to_line()
    if key == "integrator-exp":
        assert r.details["max_abs"] <= 1e-9


@pytest.mark.parametrize("key", [k for k in KEYS if registry(k).known_storage is not None])
def test_known_gradients_match_finite_differences(key):
    e = registry(key)
    r = check_gradient(e.known_storage, e.model)
    assert r.margin < 1e-6, r.to_line()


def test_leaky_registry_entry_has_negative_cycle():
    from conftest import line_graph
    from oracles import closed_walk_weights
    _, _, g = line_graph("integrator-leaky-supply", 5)
    weights = [w for v in range(g.n_nodes) for w in closed_walk_weights(g, v, 6)]
    assert min(weights) < 0
