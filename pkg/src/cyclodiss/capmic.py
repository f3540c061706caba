"""Capacitor microphone.

Port-Hamiltonian model with state ``(q, p, Q)`` (plate displacement, plate
momentum, capacitor charge), inputs ``(E, F)`` (source voltage, mechanical
force) and conjugate outputs ``(I, v)``.  The capacitance law is
``C(q) = 1 / (c1 + c2 q)`` and the Hamiltonian

    H(q, p, Q) = p^2 / (2m) + k q^2 / 2 + Q^2 / (2 C(q)).

Under a constant current ``I = Ibar`` the charge is eliminated and the
mechanical port carries the storage

    H*(q, p) = k q^2 / 2 + p^2 / (2m) - C(q)^2 Vbar^2 / 2,   Vbar = R Ibar.

The reduced mechanical model integrated here is the port-Hamiltonian system
generated by ``H*`` itself, so that ``dH*/dt = -d v^2 + F v``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import CandidateStorage, ModelError, SupplyRate, SystemModel


class CapacitanceLawError(ModelError):
    pass


class Port(enum.Enum):
    TWO_PORT = "two-port"
    MECH_PORT = "mech-port"


@dataclass(frozen=True)
class CapMicParams:
    m: float = 1.0
    k: float = 1.0
    d: float = 0.1
    R: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    Ibar: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and self.k > 0 and self.R > 0):
            raise ValueError("m, k and R must be positive")
        if self.d < 0 or self.c1 < 0 or self.c2 < 0:
            raise ValueError("d, c1 and c2 must be non-negative")

    @property
    def Vbar(self):
        return self.R * self.Ibar

    def elastance(self, q):
        """``1 / C(q) = c1 + c2 q``; raises where it is not positive."""
        e = self.c1 + self.c2 * np.asarray(q, float)
        if np.any(~(e > 0)):
            bad = np.asarray(q, float)[~(e > 0)] if np.ndim(e) else q
            raise CapacitanceLawError(
                f"capacitance law violated: c1 + c2*q <= 0 at q={np.ravel(bad)[:3].tolist()}")
        return e

    def capacitance(self, q):
        return 1.0 / self.elastance(q)


def capmic_hamiltonian(params, q, p, Q):
    q, p, Q = (np.asarray(a, float) for a in (q, p, Q))
    return p ** 2 / (2 * params.m) + 0.5 * params.k * q ** 2 + 0.5 * params.elastance(q) * Q ** 2


def capmic_legendre(params, q, p):
    """``H*(q, p)`` for the constant-current configuration."""
    q, p = np.asarray(q, float), np.asarray(p, float)
    C = params.capacitance(q)
    val = 0.5 * params.k * q ** 2 + p ** 2 / (2 * params.m) - 0.5 * C ** 2 * params.Vbar ** 2
    if params.c1 > 0:
        # C(q) <= 1/c1 wherever q >= 0, so the electrical term is bounded there
        floor = 0.5 * params.k * q ** 2 + p ** 2 / (2 * params.m) \
            - params.Vbar ** 2 / (2 * params.c1 ** 2)
        nonneg = q >= 0
        if np.any(val[nonneg] < floor[nonneg] - 1e-12 * (1 + np.abs(floor[nonneg]))):
            raise AssertionError("H* below its c1 > 0 lower bound")
    return val if val.ndim else float(val)


def capmic_legendre_floor(params):
    """Lower bound of the electrical part of ``H*`` over ``q >= 0`` (``-inf`` if ``c1 = 0``)."""
    if params.c1 == 0:
        return -np.inf if params.Vbar != 0 else 0.0
    return -params.Vbar ** 2 / (2 * params.c1 ** 2)


def _guard(params):
    def guard(x):
        params.elastance(np.asarray(x, float)[..., 0])
    return guard


def capmic_model(params=CapMicParams(), box=((-0.5, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
                 inputs=None):
    """Two-port model, state ``(q, p, Q)``, input ``(E, F)``, output ``(I, v)``."""
    P = params

    def f(x, u):
        q, p, Q = x[..., 0], x[..., 1], x[..., 2]
        E, F = u[..., 0], u[..., 1]
        el = P.c1 + P.c2 * q
        dq = p / P.m
        dp = -P.k * q - 0.5 * P.c2 * Q ** 2 - P.d * p / P.m + F
        dQ = -el * Q / P.R + E / P.R
        return np.stack(np.broadcast_arrays(dq, dp, dQ), axis=-1)

    def h(x, u):
        q, p, Q = x[..., 0], x[..., 1], x[..., 2]
        current = (P.c1 + P.c2 * q) * Q / P.R
        return np.stack(np.broadcast_arrays(current, p / P.m), axis=-1)

    if inputs is None:
        inputs = np.array([[e, fo] for e in (-1.0, 0.0, 1.0) for fo in (-1.0, 0.0, 1.0)])
    return SystemModel(3, 2, 2, f, h, np.array(box, float), inputs, "cap-mic", _guard(P))


def capmic_supply():
    """Total supplied power ``E I + F v``."""
    return SupplyRate(lambda u, y: np.sum(u * y, axis=-1), "passivity")


def capmic_port_supplies():
    """Electrical ``E I`` and mechanical ``F v`` power, in that order."""
    return (SupplyRate(lambda u, y: u[..., 0] * y[..., 0], "electrical"),
            SupplyRate(lambda u, y: u[..., 1] * y[..., 1], "mechanical"))


def capmic_mech_supply():
    """Mechanical power ``F v`` of the reduced one-port model."""
    return SupplyRate(lambda u, y: u[..., 0] * y[..., 0], "mechanical")


def capmic_storage(params=CapMicParams()):
    P = params

    def grad(x):
        q, p, Q = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([P.k * q + 0.5 * P.c2 * Q ** 2, p / P.m, (P.c1 + P.c2 * q) * Q], axis=-1)

    return CandidateStorage(lambda x: capmic_hamiltonian(P, x[..., 0], x[..., 1], x[..., 2]),
                            grad, "H")


def capmic_power_balance(params, x, u):
    """``(dH/dt, -d v^2 - R I^2 + E I + F v)`` with ``dH/dt`` from the gradient."""
    model = capmic_model(params)
    x, u = np.asarray(x, float), np.asarray(u, float)
    hdot = np.sum(capmic_storage(params).grad(x) * model.f(x, u), axis=-1)
    current, v = np.moveaxis(model.h(x, u), -1, 0)
    rhs = -params.d * v ** 2 - params.R * current ** 2 + u[..., 0] * current + u[..., 1] * v
    return hdot, rhs


def capmic_mech_model(params, box=((0.2, 2.0), (-2.0, 2.0)), forces=(-1.0, 0.0, 1.0)):
    """Constant-current mechanical port: state ``(q, p)``, input ``F``, output ``v``."""
    P = params
    V2 = P.Vbar ** 2

    def f(x, u):
        q, p = x[..., 0], x[..., 1]
        C = 1.0 / (P.c1 + P.c2 * q)
        dq = p / P.m
        # -dH*/dq = -k q - c2 C^3 Vbar^2
        dp = -P.k * q - P.c2 * C ** 3 * V2 - P.d * p / P.m + u[..., 0]
        return np.stack(np.broadcast_arrays(dq, dp), axis=-1)

    def h(x, u):
        return (x[..., 1] / P.m)[..., None] + 0.0 * u

    return SystemModel(2, 1, 1, f, h, np.array(box, float),
                       np.asarray(forces, float).reshape(-1, 1), "cap-mic-mech", _guard(P))


def capmic_mech_force(params, q0=1.0, amp=0.3, period=10.0):
    """Feed-forward force that drives ``q(t) = q0 + amp sin(2 pi t / period)``.

    Returns ``(F, x0)``, the force as a function of time and the matching
    initial state.
    """
    P = params
    w = 2 * np.pi / period

    def F(t):
        q = q0 + amp * np.sin(w * t)
        qd = amp * w * np.cos(w * t)
        qdd = -amp * w * w * np.sin(w * t)
        C = 1.0 / (P.c1 + P.c2 * q)
        return np.array([P.m * qdd + P.d * qd + P.k * q + P.c2 * C ** 3 * P.Vbar ** 2])

    return F, np.array([q0, P.m * amp * w])


def tabulate_legendre(params, q_hi=5.0, n=100, q_lo=-0.9):
    """``H*(q, 0)`` on ``n`` points of ``(max(q_lo, -c1/c2), q_hi]``."""
    lo = q_lo
    if params.c2 > 0:
        lo = max(lo, -params.c1 / params.c2)
    q = lo + (q_hi - lo) * np.arange(1, n + 1) / n
    return q, np.asarray(capmic_legendre(params, q, np.zeros_like(q)))


def random_smooth_inputs(seed, channels=2, amplitude=0.5, modes=3):
    """Sum-of-sinusoids input ``u(t)`` with random frequencies and phases."""
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.2, 1.0, (modes, channels)) * amplitude / modes
    freq = rng.uniform(0.2, 2.0, (modes, channels))
    phase = rng.uniform(0.0, 2 * np.pi, (modes, channels))

    def u(t):
        return np.sum(amp * np.sin(freq * t + phase), axis=0)

    return u


def capmic_energy_balance(traj, params, which=Port.TWO_PORT, tol=None):
    """Storage increase never exceeds the supplied energy on any sub-interval.

    TWO_PORT uses ``H`` and the total supply ``E I + F v`` integrated along
    ``traj``; MECH_PORT uses ``H*`` and the mechanical supply ``F v``.  The
    default tolerance is the RK4 budget ``10 h^4 T``.
    """
    from .verify import CheckReport

    which = Port(which)
    if which is Port.TWO_PORT:
        H = capmic_hamiltonian(params, traj.x[:, 0], traj.x[:, 1], traj.x[:, 2])
    else:
        H = np.asarray(capmic_legendre(params, traj.x[:, 0], traj.x[:, 1]))
    if tol is None:
        tol = 10.0 * traj.h ** 4 * traj.T
    # slack D(t) = supplied - stored must be non-decreasing
    slack = traj.supply_int - (H - H[0])
    running = np.maximum.accumulate(slack)
    drop = running - slack
    j = int(np.argmax(drop))
    i = int(np.flatnonzero(slack[: j + 1] == running[j])[0])
    margin = float(drop[j])
    name = f"capmic_{which.name.lower()}"
    return CheckReport(name, margin <= tol, margin, f"t:{traj.t[i]:.6g}..{traj.t[j]:.6g}",
                       float(tol), details={"stored": float(H[-1] - H[0]),
                                            "supplied": float(traj.supply_int[-1])})
