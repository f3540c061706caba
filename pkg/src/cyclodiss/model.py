"""Systems, supply rates and candidate storage functions.

All callables are vectorised: states have shape ``(..., n)``, inputs
``(..., m)``, outputs ``(..., p)``, and scalar maps return shape ``(...)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import jsonschema
import numpy as np

from .expr import Expression, ExpressionError, compile_vector


class ModelError(ValueError):
    """Base class for model construction and evaluation failures."""


class ConfigError(ModelError):
    """The config document does not match the schema."""


class ValidationError(ModelError):
    """A model produced a non-finite value at a probe point."""


class EvaluationError(ModelError):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SystemModel:
    state_dim: int
    input_dim: int
    output_dim: int
    dynamics: Callable
    output: Callable
    state_bounds: np.ndarray
    inputs: np.ndarray
    name: str = ""
    # optional state-admissibility hook, raises ModelError on invalid states
    guard: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        bounds = _frozen(self.state_bounds)
        inputs = _frozen(self.inputs)
        if inputs.ndim == 1:
            inputs = _frozen(inputs.reshape(-1, self.input_dim))
        object.__setattr__(self, "state_bounds", bounds)
        object.__setattr__(self, "inputs", inputs)
        if min(self.state_dim, self.input_dim, self.output_dim) < 1:
            raise ModelError("dimensions must be positive")
        if bounds.shape != (self.state_dim, 2):
            raise ModelError(f"state_bounds must have shape ({self.state_dim}, 2), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ModelError(f"state_bounds need positive finite width in every dimension: {bounds.tolist()}")
        if inputs.size == 0:
            raise ModelError("input set is empty")
        if inputs.shape[1] != self.input_dim:
            raise ModelError(f"inputs must have {self.input_dim} columns, got {inputs.shape[1]}")

    @property
    def lo(self):
        return self.state_bounds[:, 0]

    @property
    def hi(self):
        return self.state_bounds[:, 1]

    def input_hull(self):
        return self.inputs.min(axis=0), self.inputs.max(axis=0)

    def f(self, x, u):
        return np.asarray(self.dynamics(np.asarray(x, float), np.asarray(u, float)), float)

    def h(self, x, u):
        return np.asarray(self.output(np.asarray(x, float), np.asarray(u, float)), float)

    def probe_points(self):
        """Box corners followed by the box center."""
        corners = np.array(list(itertools.product(*self.state_bounds.tolist())))
        return np.vstack([corners, self.state_bounds.mean(axis=1)])

    def validate(self):
        """Evaluate dynamics and output at every probe point and input sample."""
        for x in self.probe_points():
            if self.guard is not None:
                self.guard(x)
            for u in self.inputs:
                dx = self.f(x, u)
                y = self.h(x, u)
                if dx.shape != (self.state_dim,) or y.shape != (self.output_dim,):
                    raise ValidationError(
                        f"{self.name or 'model'}: wrong result shape at x={x.tolist()}, u={u.tolist()}")
                if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(y))):
                    raise ValidationError(
                        f"{self.name or 'model'}: non-finite dynamics/output at probe point "
                        f"x={x.tolist()}, u={u.tolist()}")
        return self


@dataclass(frozen=True, eq=False)
class SupplyRate:
    eval: Callable
    name: str = "supply"

    def __call__(self, u, y):
        return np.asarray(self.eval(np.asarray(u, float), np.asarray(y, float)), float)

    def negated(self):
        """Supply ``-s``, used to express the reversed dissipation inequality."""
        base = self.eval
        return SupplyRate(lambda u, y: -np.asarray(base(u, y), float), f"-({self.name})")


@dataclass(frozen=True, eq=False)
class CandidateStorage:
    eval: Callable
    gradient: Callable | None = None
    name: str = "candidate"

    def __call__(self, x):
        return np.asarray(self.eval(np.asarray(x, float)), float)

    def grad(self, x):
        if self.gradient is None:
            return fd_gradient(self.eval, x)
        return np.asarray(self.gradient(np.asarray(x, float)), float)

    def negated(self):
        ev, gr = self.eval, self.gradient
        return CandidateStorage(
            lambda x: -np.asarray(ev(x), float),
            None if gr is None else (lambda x: -np.asarray(gr(x), float)),
            f"-({self.name})",
        )

    def shifted(self, c):
        ev = self.eval
        return CandidateStorage(lambda x: np.asarray(ev(x), float) + c, self.gradient,
                                f"{self.name}+{c:g}")


FD_STEP = 1e-5


def fd_gradient(fn, x, step=FD_STEP):
    """Central finite-difference gradient of a scalar map, vectorised over ``x``."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    g = np.empty(x.shape)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        g[..., i] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * step)
    return g


def passivity_supply(name="passivity"):
    return SupplyRate(lambda u, y: np.sum(u * y, axis=-1), name)


def eval_output(model, x, u):
    return model.h(x, u)


def eval_supply(supply, model, x, u):
    """``s(u, h(x, u))`` at a single point."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    val = supply(u, eval_output(model, x, u))
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"supply {supply.name!r} not finite at x={x.tolist()}, u={u.tolist()}")
    return float(val) if np.ndim(val) == 0 else val


# -- config loading -------------------------------------------------------------

def model_schema():
    text = resources.files("cyclodiss").joinpath("schema/model.schema.json").read_text()
    return json.loads(text)


def _input_samples(grid_cfg, m):
    if "list" in grid_cfg:
        pts = np.array(grid_cfg["list"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != m:
            raise ConfigError(f"input_grid.list: every entry needs {m} components")
        return pts
    lo, hi, n = (np.asarray(grid_cfg[k], float) for k in ("lo", "hi", "samples"))
    if not (len(lo) == len(hi) == len(n) == m):
        raise ConfigError(f"input_grid: lo/hi/samples need {m} entries each")
    if np.any(hi < lo):
        raise ConfigError("input_grid: hi < lo")
    axes = [np.linspace(a, b, int(k)) if k > 1 else np.array([0.5 * (a + b)])
            for a, b, k in zip(lo, hi, n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def load_model(config_text):
    """Parse and validate a JSON model config.

    Returns ``(SystemModel, SupplyRate, CandidateStorage | None)``.
    """
    try:
        doc = json.loads(config_text) if isinstance(config_text, (str, bytes)) else config_text
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, model_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from None

    n, m = doc["state_dim"], doc["input_dim"]
    p = len(doc["output"])
    if len(doc["dynamics"]) != n:
        raise ConfigError(f"dynamics: expected {n} expressions, got {len(doc['dynamics'])}")
    if len(doc["state_bounds"]) != n:
        raise ConfigError(f"state_bounds: expected {n} intervals, got {len(doc['state_bounds'])}")
    dims = {"x": n, "u": m, "y": p}
    try:
        f = compile_vector(doc["dynamics"], "xu", dims)
        h = compile_vector(doc["output"], "xu", dims)
        s_expr = Expression(doc["supply"], "uy", dims)
        storage = None
        if "storage" in doc:
            st = doc["storage"]
            s_eval = Expression(st["expr"], "x", dims)
            grad = None
            if "grad" in st:
                if len(st["grad"]) != n:
                    raise ConfigError(f"storage.grad: expected {n} expressions")
                grad = compile_vector(st["grad"], "x", dims)
            storage = CandidateStorage(lambda x: s_eval(x=x),
                                       None if grad is None else (lambda x: grad(x=x)),
                                       st["expr"])
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from None

    try:
        model = SystemModel(
            state_dim=n, input_dim=m, output_dim=p,
            dynamics=lambda x, u: f(x=x, u=u),
            output=lambda x, u: h(x=x, u=u),
            state_bounds=doc["state_bounds"],
            inputs=_input_samples(doc["input_grid"], m),
            name=doc.get("name", "config"),
        )
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    supply = SupplyRate(lambda u, y: s_expr(u=u, y=y), doc["supply"])
    try:
        model.validate()
        for x in model.probe_points():
            for u in model.inputs:
                eval_supply(supply, model, x, u)
            if storage is not None:
                v = storage(x)
                if not np.isfinite(v):
                    raise ValidationError(f"storage not finite at probe point x={x.tolist()}")
    except EvaluationError as exc:
        raise ValidationError(str(exc)) from None
    return model, supply, storage
