import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cyclodiss.abstraction import Grid, build_graph  # noqa: E402
from cyclodiss.model import CandidateStorage, SupplyRate, SystemModel  # noqa: E402
from cyclodiss.registry import registry  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def line_graph(key, nodes, inputs=None, h=None, box=None):
    """Abstraction of a registry model on a 1-d grid; ``h`` defaults to the spacing."""
    entry = registry(key)
    model = entry.model
    if inputs is not None or box is not None:
        model = SystemModel(model.state_dim, model.input_dim, model.output_dim, model.dynamics,
                            model.output, model.state_bounds if box is None else [box],
                            model.inputs if inputs is None else [[u] for u in inputs],
                            model.name, model.guard)
    grid = Grid(model.lo, model.hi, (nodes,))
    step = grid.spacing[0] if h is None else h
    return entry, model, build_graph(model, entry.supply, grid, h=step)


def zero_supply_model(box=(-1.0, 1.0), inputs=(-1.0, 0.0, 1.0)):
    model = SystemModel(1, 1, 1, lambda x, u: u + 0.0 * x, lambda x, u: x + 0.0 * u,
                        [list(box)], [[u] for u in inputs], "zero-supply")
    supply = SupplyRate(lambda u, y: 0.0 * u[..., 0] * y[..., 0], "zero")
    storage = CandidateStorage(lambda x: 0.0 * np.asarray(x, float)[..., 0],
                               lambda x: 0.0 * np.asarray(x, float), "0")
    return model, supply, storage


@pytest.fixture(scope="session")
def exp81():
    """integrator-exp on [-2, 2], 81 nodes, u in {-1, 0, 1}, h = spacing."""
    return line_graph("integrator-exp", 81)


@pytest.fixture(scope="session")
def exp161():
    """The acceptance configuration: 161 nodes and five input levels."""
    return line_graph("integrator-exp", 161, inputs=(-1.0, -0.5, 0.0, 0.5, 1.0))


@pytest.fixture(scope="session")
def leaky5():
    return line_graph("integrator-leaky-supply", 5)


@pytest.fixture(scope="session")
def leaky21():
    return line_graph("integrator-leaky-supply", 21)


@pytest.fixture(scope="session")
def zero_graph():
    model, supply, storage = zero_supply_model()
    grid = Grid(model.lo, model.hi, (21,))
    return model, supply, storage, build_graph(model, supply, grid, h=grid.spacing[0])


# one summary line per acceptance criterion

_CRITERIA = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    ok = report.passed if report.when == "call" else not report.failed
    if report.when == "call" or report.failed:
        prev = _CRITERIA.get(crit, True)
        _CRITERIA[crit] = prev and ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA, key=lambda c: int(c.split(":")[0])):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if _CRITERIA[crit] else 'FAIL'}")
