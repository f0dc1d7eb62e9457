"""Nonlinear two-body + J2 propagation with constant inertial thrust."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .astro import (
    EARTH,
    CartesianState,
    EarthModel,
    RoeState,
    cartesian_to_oe,
    j2_acceleration,
    oe_to_roe,
    osc_to_mean,
)

# Fixed-step 8th-order Dormand-Prince tableau (the 12 stages of DOP853 that
# form the 8th-order solution).
_STAGES = _dop.N_STAGES
_A = np.asarray(_dop.A[:_STAGES, :_STAGES])
_B = np.asarray(_dop.B)
_C = np.asarray(_dop.C[:_STAGES])


class PropagationError(RuntimeError):
    """Integration left the supported regime (impact, escape, energy drift)."""


@dataclass(frozen=True)
class PropagationConfig:
    step: float = 10.0  # s
    j2: bool = True
    body: EarthModel = EARTH
    energy_tol: float = 1e-7  # relative energy/work mismatch that flags instability

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValueError("integrator step must be positive")

    @property
    def j2_coeff(self) -> float:
        return self.body.j2 if self.j2 else 0.0


def _gravity(r: np.ndarray, config: PropagationConfig) -> np.ndarray:
    rmag = np.linalg.norm(r, axis=-1, keepdims=True)
    acc = -config.body.mu * r / rmag**3
    if config.j2:
        acc = acc + j2_acceleration(r, config.body)
    return acc


def _energy(r: np.ndarray, v: np.ndarray, config: PropagationConfig) -> np.ndarray:
    body = config.body
    rmag = np.linalg.norm(r, axis=-1)
    pot = -body.mu / rmag
    if config.j2:
        sin2 = (r[..., 2] / rmag) ** 2
        pot = pot + body.mu * body.j2 * body.radius**2 / (2.0 * rmag**3) * (3.0 * sin2 - 1.0)
    return 0.5 * np.sum(v * v, axis=-1) + pot


def propagate_states(states: np.ndarray, accel: np.ndarray, dt: float,
                     config: PropagationConfig = PropagationConfig()) -> np.ndarray:
    """Propagate stacked Cartesian states (N, 6) by ``dt`` seconds.

    ``accel`` holds one constant inertial thrust acceleration per state (N, 3).
    """
    y = np.array(states, dtype=float, copy=True)
    accel = np.broadcast_to(np.asarray(accel, dtype=float), y[:, :3].shape)
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    if dt == 0.0:
        return y
    n_steps = max(1, math.ceil(dt / config.step - 1e-12))
    h = dt / n_steps

    def rhs(state):
        return np.concatenate([state[:, 3:], _gravity(state[:, :3], config) + accel], axis=1)

    e0 = _energy(y[:, :3], y[:, 3:], config)
    work = np.zeros(len(y))
    k = np.empty((_STAGES,) + y.shape)
    for _ in range(n_steps):
        v_start = y[:, 3:].copy()
        k[0] = rhs(y)
        for s in range(1, _STAGES):
            k[s] = rhs(y + h * np.tensordot(_A[s, :s], k[:s], axes=1))
        y = y + h * np.tensordot(_B, k, axes=1)
        work += h * np.sum(accel * 0.5 * (v_start + y[:, 3:]), axis=1)
        if np.any(np.linalg.norm(y[:, :3], axis=1) < config.body.radius):
            raise PropagationError("trajectory intersects the Earth")
    e1 = _energy(y[:, :3], y[:, 3:], config)
    if not np.all(np.isfinite(e1)) or np.any(e1 >= 0.0):
        raise PropagationError("orbit became unbound or non-finite")
    drift = np.abs(e1 - e0 - work) / np.abs(e0)
    if np.any(drift > config.energy_tol):
        raise PropagationError(
            f"energy drift {drift.max():.3e} exceeds guard {config.energy_tol:.1e}; reduce the step"
        )
    return y


def propagate(x: CartesianState, thrust_inertial, mass: float, dt: float,
              config: PropagationConfig = PropagationConfig()) -> CartesianState:
    """Propagate one spacecraft with thrust [N] held constant in inertial axes."""
    accel = np.asarray(thrust_inertial, dtype=float).reshape(1, 3) / mass
    out = propagate_states(x.as_array()[None, :], accel, dt, config)
    return CartesianState.from_array(out[0])


def mean_roe_between(chief: CartesianState, deputy: CartesianState,
                     body: EarthModel = EARTH) -> RoeState:
    """Mean dimensional ROE from two osculating Cartesian states at one epoch."""
    mu = body.mu
    chief_mean = osc_to_mean(cartesian_to_oe(chief, mu), body)
    deputy_mean = osc_to_mean(cartesian_to_oe(deputy, mu), body)
    return oe_to_roe(chief_mean, deputy_mean)
