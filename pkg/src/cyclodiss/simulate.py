"""Continuous-time simulation with RK4 and joint supply quadrature."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ModelError


class SimulationError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    supply_int: np.ndarray
    port_int: np.ndarray | None = None
    port_names: tuple = ()
    left_box: bool = False

    def __len__(self):
        return self.t.size

    @property
    def h(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def T(self):
        return float(self.t[-1])

    def to_csv(self):
        n, m, p = self.x.shape[1], self.u.shape[1], self.y.shape[1]
        cols = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                + [f"y{i + 1}" for i in range(p)] + ["supply_int"]
                + [f"port_int_{name}" for name in self.port_names])
        parts = [self.t[:, None], self.x, self.u, self.y, self.supply_int[:, None]]
        if self.port_int is not None:
            parts.append(self.port_int)
        table = np.hstack(parts)
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in table.tolist():
            buf.write(",".join(repr(v) for v in row) + "\n")
        return buf.getvalue()


def _input_fn(inputs, n_steps, h, m):
    """Return ``u(k, c)``: the input in step ``k`` at stage offset ``c`` in [0, 1]."""
    if callable(inputs):
        return lambda k, c: np.asarray(inputs((k + c) * h), float).reshape(m)
    arr = np.asarray(inputs, float)
    if arr.ndim == 1:
        arr = arr.reshape(1, m)
    if arr.shape[0] == 1:
        return lambda k, c: arr[0]
    if arr.shape[0] != n_steps:
        raise ValueError(f"input schedule has {arr.shape[0]} rows, expected 1 or {n_steps}")
    return lambda k, c: arr[min(k, n_steps - 1)]


def simulate(model, x0, inputs, T, h_sim, supply=None, ports=()):
    """Integrate ``model`` from ``x0`` for time ``T`` with RK4 step ``h_sim``.

    ``inputs`` is a constant vector, an ``(n_steps, m)`` array held over each
    step, or a callable ``u(t)`` sampled at the RK4 stage times.  The supply
    integral and one integral per entry of ``ports`` are integrated jointly
    with the state.
    """
    if not h_sim > 0:
        raise ValueError("h_sim must be positive")
    n_steps = int(round(T / h_sim))
    if n_steps < 1 or abs(n_steps * h_sim - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not a positive multiple of h_sim={h_sim}")
    ports = tuple(ports)
    rates = ((supply,) if supply is not None else ()) + ports
    x = np.array(x0, dtype=float).reshape(model.state_dim)
    u_at = _input_fn(inputs, n_steps, h_sim, model.input_dim)

    def rhs(z, k, c):
        xs = z[: model.state_dim]
        if model.guard is not None:
            model.guard(xs)
        u = u_at(k, c)
        y = model.h(xs, u)
        return np.concatenate([model.f(xs, u), [float(r(u, y)) for r in rates]])

    z = np.concatenate([x, np.zeros(len(rates))])
    zs = np.empty((n_steps + 1, z.size))
    us = np.empty((n_steps + 1, model.input_dim))
    zs[0] = z
    h = h_sim
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for k in range(n_steps):
                k1 = rhs(z, k, 0.0)
                k2 = rhs(z + 0.5 * h * k1, k, 0.5)
                k3 = rhs(z + 0.5 * h * k2, k, 0.5)
                k4 = rhs(z + h * k3, k, 1.0)
                z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(z)):
                    raise SimulationError(f"non-finite state at t={(k + 1) * h:.6g}")
                zs[k + 1] = z
                us[k] = u_at(k, 0.0)
            us[n_steps] = u_at(n_steps - 1, 1.0)
        except ModelError as exc:
            if isinstance(exc, SimulationError):
                raise
            raise SimulationError(f"{exc} (near t={k * h:.6g})") from None

    xs = zs[:, : model.state_dim]
    ys = np.stack([model.h(xs[i], us[i]) for i in range(n_steps + 1)])
    t = np.arange(n_steps + 1) * h_sim
    ints = zs[:, model.state_dim:]
    supply_int = ints[:, 0] if supply is not None else np.zeros(n_steps + 1)
    port_int = ints[:, 1 if supply is not None else 0:] if ports else None
    return Trajectory(t, xs, us, ys, supply_int, port_int,
                      tuple(getattr(p, "name", f"p{i}") for i, p in enumerate(ports)),
                      bool(np.any(~_in_box(model, xs))))


def _in_box(model, xs):
    slack = 1e-9 * (model.hi - model.lo)
    return np.all((xs >= model.lo - slack) & (xs <= model.hi + slack), axis=-1)


class Replay(NamedTuple):
    integral: float
    gap: float
    trajectory: Trajectory


def replay_certificate(model, supply, cert, graph, refine=4):
    """Re-run a certificate's input sequence in continuous time without snapping.

    Returns the cyclic supply integral and the closure gap ``|x(T) - x(0)|``.
    """
    x0 = graph.grid.coords()[cert.nodes[0]]
    per_edge = refine * max(int(graph.substeps), 1)
    schedule = np.repeat(graph.inputs[list(cert.inputs)], per_edge, axis=0)
    h_sim = graph.h / per_edge
    traj = simulate(model, x0, schedule, h_sim * len(schedule), h_sim, supply)
    gap = float(np.linalg.norm(traj.x[-1] - traj.x[0]))
    return Replay(float(traj.supply_int[-1]), gap, traj)
