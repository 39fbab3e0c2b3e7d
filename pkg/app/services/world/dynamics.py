"""Kinematic bicycle model with first-order longitudinal velocity lag.

    delta      = steering * max_steering_angle
    theta_dot  = V_x * tan(delta) / wheelbase
    V_x'       = target + (V_x - target) * exp(-dt / tau_v),  target = throttle * max_speed
    p'         = p + dt * R(theta) [V_x, V_y]
    theta'     = wrap(theta + dt * theta_dot)

V_y and psi are held at zero (planar, no slip).
"""
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.constants import CONTROL_LIMIT, PSI, PX, PY, THETA, THETA_DOT, VX, VY
from app.schemas import VehicleConfig
from app.utils.numerics import require_finite, wrap_angle

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class VehicleState:
    p_x: float = 0.0
    p_y: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    V_x: float = 0.0
    V_y: float = 0.0
    theta_dot: float = 0.0

    def as_array(self) -> DoubleArray:
        return np.array(
            [self.p_x, self.p_y, self.theta, self.psi, self.V_x, self.V_y, self.theta_dot],
            dtype=float,
        )

    @classmethod
    def from_array(cls, values) -> "VehicleState":
        return cls(*(float(v) for v in np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class Control:
    steering: float = 0.0
    throttle: float = 0.0

    def __post_init__(self) -> None:
        require_finite([self.steering, self.throttle], "control")
        if abs(self.steering) > CONTROL_LIMIT or abs(self.throttle) > CONTROL_LIMIT:
            raise ValueError(f"control ({self.steering}, {self.throttle}) outside [-1, 1]^2")

    def as_array(self) -> DoubleArray:
        return np.array([self.steering, self.throttle], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Control":
        steering, throttle = np.asarray(values, dtype=float)
        return cls(float(steering), float(throttle))


def clamp_control(control) -> DoubleArray:
    """Clamp a control vector to the actuator box [-1, 1]^2."""
    control = np.asarray(control, dtype=float)
    require_finite(control, "control")
    return np.clip(control, -CONTROL_LIMIT, CONTROL_LIMIT)


def step_dynamics_batch(states, controls, dt: float, vehicle: VehicleConfig) -> DoubleArray:
    """Advance stacked states (..., 7) under stacked controls (..., 2) by dt. No validation."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)

    theta = states[..., THETA]
    v_x = states[..., VX]
    v_y = states[..., VY]

    delta = controls[..., 0] * vehicle.max_steering_angle
    rate = v_x * np.tan(delta) / vehicle.wheelbase
    target = controls[..., 1] * vehicle.max_speed
    decay = math.exp(-dt / vehicle.velocity_time_constant)

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    out = np.empty_like(states)
    out[..., PX] = states[..., PX] + dt * (v_x * cos_t - v_y * sin_t)
    out[..., PY] = states[..., PY] + dt * (v_x * sin_t + v_y * cos_t)
    out[..., THETA] = wrap_angle(theta + dt * rate)
    out[..., PSI] = 0.0
    out[..., VX] = target + (v_x - target) * decay
    out[..., VY] = 0.0
    out[..., THETA_DOT] = rate
    return out


def step_dynamics(state, control, dt: float, vehicle: VehicleConfig) -> DoubleArray:
    """Advance a single state by dt. Rejects non-finite input.

    Args:
        state: VehicleState or its 7-vector.
        control: Control or its 2-vector, already clamped (see clamp_control).
        dt: Step length in seconds, positive.

    Returns:
        The next state as a 7-vector.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if isinstance(state, VehicleState):
        state = state.as_array()
    if isinstance(control, Control):
        control = control.as_array()
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    require_finite(state, "vehicle state")
    require_finite(control, "control")
    return step_dynamics_batch(state, control, dt, vehicle)


def turning_radius(steering: float, vehicle: VehicleConfig) -> float:
    """Radius of the circle driven at constant steering (infinite for zero steering)."""
    delta = steering * vehicle.max_steering_angle
    if delta == 0:
        return math.inf
    return vehicle.wheelbase / abs(math.tan(delta))
