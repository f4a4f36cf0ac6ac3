"""Discrete-time kinematic bicycle model and its Jacobians.

State (x, y, theta, v, delta), input (a, omega), explicit Euler update:

    x'     = x + t_s v cos(theta)
    y'     = y + t_s v sin(theta)
    theta' = theta + t_s (v / L) tan(delta)
    v'     = v + t_s a
    delta' = delta + t_s omega

The step map is unconstrained; state and input bounds live in the
planner so the map stays smooth for the Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float
    delta: float

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, self.theta, self.v, self.delta], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        x, y, theta, v, delta = (float(a) for a in arr)
        return cls(x, y, theta, v, delta)


@dataclass(frozen=True)
class ControlInput:
    a: float
    omega: float

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.a, self.omega], dtype=float)


@dataclass(frozen=True)
class VehicleBounds:
    v_min: float = 0.0
    v_max: float = 5.0
    delta_min: float = -1.5
    delta_max: float = 1.5
    a_min: float = -5.0
    a_max: float = 2.0
    omega_min: float = -1.5
    omega_max: float = 1.5

    def __post_init__(self):
        for lo, hi, name in (
            (self.v_min, self.v_max, "v"),
            (self.delta_min, self.delta_max, "delta"),
            (self.a_min, self.a_max, "a"),
            (self.omega_min, self.omega_max, "omega"),
        ):
            if lo > hi:
                raise DynamicsError(f"{name} bounds inverted: [{lo}, {hi}]")


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    t_s: float = 0.4
    bounds: VehicleBounds = VehicleBounds()

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise DynamicsError("wheelbase must be positive")
        if self.t_s <= 0:
            raise DynamicsError("t_s must be positive")


_TAN_GUARD = 1e-9


def step_array(s: NDArray[np.float64], u: NDArray[np.float64], p: VehicleParams) -> NDArray[np.float64]:
    x, y, theta, v, delta = s
    if abs(math.cos(delta)) < _TAN_GUARD and v != 0.0:
        raise DynamicsError(f"steering angle {delta} at the tan singularity with v={v}")
    ts = p.t_s
    return np.array(
        [
            x + ts * v * math.cos(theta),
            y + ts * v * math.sin(theta),
            theta + ts * (v / p.wheelbase) * math.tan(delta),
            v + ts * u[0],
            delta + ts * u[1],
        ]
    )


def step(s: VehicleState, u: ControlInput, p: VehicleParams) -> VehicleState:
    """One Euler step of the bicycle model."""
    return VehicleState.from_array(step_array(s.as_array(), u.as_array(), p))


def rollout_array(s0: NDArray[np.float64], u_seq: NDArray[np.float64], p: VehicleParams) -> NDArray[np.float64]:
    """States (N+1, 5) from applying u_seq (N, 2) sequentially, s0 included."""
    u_seq = np.asarray(u_seq, dtype=float)
    N = len(u_seq)
    out = np.empty((N + 1, 5))
    out[0] = s0
    for n in range(N):
        out[n + 1] = step_array(out[n], u_seq[n], p)
    return out


def rollout(s0: VehicleState, u_seq: list[ControlInput], p: VehicleParams) -> list[VehicleState]:
    arr = rollout_array(s0.as_array(), np.array([u.as_array() for u in u_seq]), p)
    return [VehicleState.from_array(row) for row in arr]


def jacobians(s, u, p: VehicleParams) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Analytic (df/ds, df/du) of the step map, shapes (5, 5) and (5, 2)."""
    s = np.asarray(s, dtype=float)
    _, _, theta, v, delta = s
    if abs(math.cos(delta)) < _TAN_GUARD:
        raise DynamicsError(f"Jacobian undefined at steering angle {delta}")
    ts = p.t_s
    tan_d = math.tan(delta)
    sec2 = 1.0 + tan_d * tan_d
    A = np.eye(5)
    A[0, 2] = -ts * v * math.sin(theta)
    A[0, 3] = ts * math.cos(theta)
    A[1, 2] = ts * v * math.cos(theta)
    A[1, 3] = ts * math.sin(theta)
    A[2, 3] = ts * tan_d / p.wheelbase
    A[2, 4] = ts * v * sec2 / p.wheelbase
    B = np.zeros((5, 2))
    B[3, 0] = ts
    B[4, 1] = ts
    return A, B
