"""Built-in example systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capmic import CapMicParams, capmic_model, capmic_storage, capmic_supply
from .model import CandidateStorage, ModelError, SupplyRate, SystemModel, passivity_supply


@dataclass(frozen=True, eq=False)
class ModelRegistryEntry:
    key: str
    model: SystemModel
    supply: SupplyRate
    known_storage: CandidateStorage | None
    notes: str
    default_grid: tuple
    default_ground: tuple


def _scalar(fn):
    # lift a scalar-state formula to (..., 1) arrays
    return lambda x: fn(np.asarray(x, float)[..., 0])


def _integrator_exp():
    model = SystemModel(
        1, 1, 1,
        dynamics=lambda x, u: np.broadcast_to(u, np.broadcast_shapes(x.shape, u.shape)).copy(),
        output=lambda x, u: np.exp(x) + 0.0 * u,
        state_bounds=[[-2.0, 2.0]],
        inputs=[[-1.0], [0.0], [1.0]],
        name="integrator-exp",
    )
    storage = CandidateStorage(_scalar(lambda x: np.exp(x) - 1.0),
                               lambda x: np.exp(np.asarray(x, float)), "exp(x1)-1")
    return ModelRegistryEntry(
        "integrator-exp", model, passivity_supply(), storage,
        "dx/dt = u, y = exp(x), s = u y; lossless, storage exp(x) unique up to a constant",
        (81,), (0.0,))


def _integrator_exp_damped():
    model = SystemModel(
        1, 1, 1,
        dynamics=lambda x, u: -x ** 2 + u,
        output=lambda x, u: np.exp(x) + 0.0 * u,
        state_bounds=[[-2.0, 2.0]],
        inputs=[[-1.0], [0.0], [1.0]],
        name="integrator-exp-damped",
    )
    storage = CandidateStorage(_scalar(lambda x: np.exp(x) - 1.0),
                               lambda x: np.exp(np.asarray(x, float)), "exp(x1)-1")
    return ModelRegistryEntry(
        "integrator-exp-damped", model, passivity_supply(), storage,
        "dx/dt = -x^2 + u, y = exp(x), s = u y; passive, not lossless",
        (81,), (0.0,))


def _cap_mic():
    params = CapMicParams()
    return ModelRegistryEntry(
        "cap-mic", capmic_model(params), capmic_supply(), capmic_storage(params),
        "capacitor microphone, state (q, p, Q), input (E, F), output (I, v), s = E I + F v; "
        "default parameters m=k=R=c1=c2=1, d=0.1",
        (9, 9, 9), (0.0, 0.0, 0.0))


HEAT_CAPACITY = 1.0


def _heat_body(C=HEAT_CAPACITY, ground=None):
    ground = C if ground is None else ground
    model = SystemModel(
        1, 1, 1,
        dynamics=lambda x, u: np.broadcast_to(u, np.broadcast_shapes(x.shape, u.shape)).copy(),
        output=lambda x, u: x / C + 0.0 * u,
        state_bounds=[[0.2 * C, 5.0 * C]],
        inputs=[[-1.0], [0.0], [1.0]],
        name="heat-body",
    )
    supply = SupplyRate(lambda u, y: -u[..., 0] / y[..., 0], "negative-entropy-flow")
    storage = CandidateStorage(
        _scalar(lambda x: -C * np.log(x / C) + C * np.log(ground / C)),
        lambda x: -C / np.asarray(x, float), "-C ln(x/C) + C ln(x*/C)")
    return ModelRegistryEntry(
        "heat-body", model, supply, storage,
        "heat capacity C, state x = C T > 0, dx/dt = q, T = x/C, s = -q/T; "
        "storage is the entropy with its sign flipped",
        (97,), (ground,))


def _integrator_leaky_supply():
    model = SystemModel(
        1, 1, 1,
        dynamics=lambda x, u: np.broadcast_to(u, np.broadcast_shapes(x.shape, u.shape)).copy(),
        output=lambda x, u: x + 0.0 * u,
        state_bounds=[[-1.0, 1.0]],
        inputs=[[-1.0], [1.0]],
        name="integrator-leaky-supply",
    )
    supply = SupplyRate(lambda u, y: u[..., 0] * y[..., 0] - y[..., 0] ** 2, "leaky")
    return ModelRegistryEntry(
        "integrator-leaky-supply", model, supply, None,
        "dx/dt = u, y = x, s = u y - y^2; every cycle away from 0 has negative supply",
        (21,), (0.0,))


_BUILDERS = {
    "integrator-exp": _integrator_exp,
    "integrator-exp-damped": _integrator_exp_damped,
    "cap-mic": _cap_mic,
    "heat-body": _heat_body,
    "integrator-leaky-supply": _integrator_leaky_supply,
}

KEYS = tuple(_BUILDERS)


def registry(key):
    """Look up a built-in system by key."""
    try:
        return _BUILDERS[key]()
    except KeyError:
        raise ModelError(f"unknown model key {key!r}; known: {', '.join(KEYS)}") from None
