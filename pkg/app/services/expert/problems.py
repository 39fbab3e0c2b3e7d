"""Optimal-control problems the iLQG solver can work on.

A problem bundles the discrete dynamics, the running/terminal cost and their local
expansions. The solver only sees this interface, so the oval-tracking expert and the
linear-quadratic check instance share the same backward/forward passes.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.constants import CONTROL_DIM, CONTROL_LIMIT, STATE_DIM, THETA
from app.errors import NonFiniteError
from app.schemas import CostConfig, TrackSpec, VehicleConfig
from app.services.expert import cost as tracking_cost
from app.services.expert.cost import CostDerivatives
from app.services.world.dynamics import step_dynamics, step_dynamics_batch
from app.utils.numerics import wrap_angle

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class LocalExpansion:
    """Linearized dynamics and quadratic cost model around a nominal trajectory."""

    A: DoubleArray  # (H, n, n)
    B: DoubleArray  # (H, n, m)
    stage: CostDerivatives
    lx_final: DoubleArray  # (n,)
    lxx_final: DoubleArray  # (n, n)


class TrajectoryProblem(ABC):
    """Discrete-time finite-horizon problem: x' = f(x, u), J = sum l(x, u) + l_f(x_H)."""

    state_dim: int
    control_dim: int
    control_limit: float | None = CONTROL_LIMIT
    fd_step: float = 1e-5

    @abstractmethod
    def step_batch(self, states: DoubleArray, controls: DoubleArray) -> DoubleArray:
        """
        Advance stacked states under stacked controls by one solver step.

        Args:
            states: Array of shape (N, n)
            controls: Array of shape (N, m)

        Returns:
            Next states, shape (N, n)
        """

    @abstractmethod
    def stage_costs(self, states: DoubleArray, controls: DoubleArray) -> DoubleArray:
        """Running cost of each (state, control) row."""

    @abstractmethod
    def terminal_cost(self, state: DoubleArray) -> float:
        """Cost of the final state of the horizon."""
        pass

    @abstractmethod
    def stage_derivatives(self, states: DoubleArray, controls: DoubleArray) -> CostDerivatives:
        """
        First and second derivatives of the running cost at every stage.

        Args:
            states: Array of shape (H, n)
            controls: Array of shape (H, m)

        Returns:
            CostDerivatives with stacked gradients and Hessians
        """
        pass

    @abstractmethod
    def terminal_derivatives(self, state: DoubleArray) -> tuple[DoubleArray, DoubleArray]:
        pass

    def step(self, state: DoubleArray, control: DoubleArray) -> DoubleArray:
        return self.step_batch(state[None], control[None])[0]

    def clamp(self, controls) -> DoubleArray:
        controls = np.asarray(controls, dtype=float)
        if self.control_limit is None:
            return controls
        return np.clip(controls, -self.control_limit, self.control_limit)

    def state_difference(self, a: DoubleArray, b: DoubleArray) -> DoubleArray:
        """a - b in the state's tangent space."""
        return a - b

    def linearize(self, states: DoubleArray, controls: DoubleArray) -> tuple[DoubleArray, DoubleArray]:
        """Central finite-difference Jacobians at every (x_t, u_t), in one batched call."""
        return finite_difference_jacobians(
            self.step_batch, self.state_difference, states, controls, self.fd_step
        )

    def expand(self, states: DoubleArray, controls: DoubleArray) -> LocalExpansion:
        A, B = self.linearize(states[:-1], controls)
        lx_final, lxx_final = self.terminal_derivatives(states[-1])
        return LocalExpansion(
            A=A,
            B=B,
            stage=self.stage_derivatives(states[:-1], controls),
            lx_final=lx_final,
            lxx_final=lxx_final,
        )


def finite_difference_jacobians(step_batch, difference, states, controls, h: float):
    """Jacobians A (H, n, n) and B (H, n, m) of step_batch by central differences."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    horizon, n = states.shape
    m = controls.shape[1]

    dx = h * np.eye(n)
    du = h * np.eye(m)
    # Perturbation blocks: +x, -x, +u, -u
    x_stack = np.concatenate(
        [
            states[:, None, :] + dx,
            states[:, None, :] - dx,
            np.repeat(states[:, None, :], 2 * m, axis=1),
        ],
        axis=1,
    )
    u_stack = np.concatenate(
        [
            np.repeat(controls[:, None, :], 2 * n, axis=1),
            controls[:, None, :] + du,
            controls[:, None, :] - du,
        ],
        axis=1,
    )
    rows = 2 * n + 2 * m
    out = step_batch(x_stack.reshape(-1, n), u_stack.reshape(-1, m)).reshape(horizon, rows, n)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite dynamics output at a perturbed linearization point")

    # Row j of each block is the response to perturbing component j; transpose to (out, in)
    A = difference(out[:, :n], out[:, n:2 * n]) / (2.0 * h)
    B = difference(out[:, 2 * n:2 * n + m], out[:, 2 * n + m:]) / (2.0 * h)
    return np.swapaxes(A, 1, 2), np.swapaxes(B, 1, 2)


def _vehicle_difference(a: DoubleArray, b: DoubleArray) -> DoubleArray:
    diff = a - b
    diff[..., THETA] = wrap_angle(diff[..., THETA])
    return diff


def linearize_dynamics(
    state, control, dt: float, vehicle: VehicleConfig, h: float = 1e-5
) -> tuple[DoubleArray, DoubleArray]:
    """A (7x7) and B (7x2) of the bicycle step at one point, by central differences."""
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    # Validates the nominal point the same way a plain step does
    step_dynamics(state, control, dt, vehicle)
    A, B = finite_difference_jacobians(
        lambda x, u: step_dynamics_batch(x, u, dt, vehicle),
        _vehicle_difference,
        state[None],
        control[None],
        h,
    )
    return A[0], B[0]


class OvalTrackingProblem(TrajectoryProblem):
    """Bicycle model on the oval with the centerline + speed tracking cost."""

    state_dim = STATE_DIM
    control_dim = CONTROL_DIM

    def __init__(
        self,
        track: TrackSpec,
        vehicle: VehicleConfig,
        cost: CostConfig,
        dt: float,
        fd_step: float = 1e-5,
    ):
        self.track = track
        self.vehicle = vehicle
        self.cost = cost
        self.dt = dt
        self.fd_step = fd_step

    def step_batch(self, states, controls):
        return step_dynamics_batch(states, controls, self.dt, self.vehicle)

    def state_difference(self, a, b):
        return _vehicle_difference(a, b)

    def stage_costs(self, states, controls):
        return tracking_cost.stage_costs(states, controls, self.cost, self.track)

    def terminal_cost(self, state):
        return tracking_cost.terminal_cost(state, self.cost, self.track)

    def stage_derivatives(self, states, controls):
        return tracking_cost.stage_cost_derivatives(states, controls, self.cost, self.track)

    def terminal_derivatives(self, state):
        lx, lxx = tracking_cost.state_cost_derivatives(state[None], self.cost, self.track)
        return lx[0], lxx[0]


class LinearQuadraticProblem(TrajectoryProblem):
    """x' = A x + B u with cost x^T Q x + u^T R u and terminal x^T Q_f x.

    Exact Jacobians and Hessians, no control bound unless one is given. Used to check the
    solver against the Riccati recursion.
    """

    def __init__(self, A, B, Q, R, Q_final=None, control_limit: float | None = None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.Q = _symmetric(Q)
        self.R = _symmetric(R)
        self.Q_final = self.Q if Q_final is None else _symmetric(Q_final)
        self.state_dim, self.control_dim = self.B.shape
        self.control_limit = control_limit

    def step_batch(self, states, controls):
        return np.asarray(states) @ self.A.T + np.asarray(controls) @ self.B.T

    def stage_costs(self, states, controls):
        states = np.atleast_2d(states)
        controls = np.atleast_2d(controls)
        return np.einsum("ti,ij,tj->t", states, self.Q, states) + np.einsum(
            "ti,ij,tj->t", controls, self.R, controls
        )

    def terminal_cost(self, state):
        return float(state @ self.Q_final @ state)

    def linearize(self, states, controls):
        horizon = len(controls)
        return (
            np.broadcast_to(self.A, (horizon, *self.A.shape)).copy(),
            np.broadcast_to(self.B, (horizon, *self.B.shape)).copy(),
        )

    def stage_derivatives(self, states, controls):
        horizon = len(controls)
        n, m = self.state_dim, self.control_dim
        return CostDerivatives(
            lx=2.0 * states @ self.Q.T,
            lu=2.0 * controls @ self.R.T,
            lxx=np.broadcast_to(2.0 * self.Q, (horizon, n, n)).copy(),
            luu=np.broadcast_to(2.0 * self.R, (horizon, m, m)).copy(),
            lux=np.zeros((horizon, m, n)),
        )

    def terminal_derivatives(self, state):
        return 2.0 * self.Q_final @ state, 2.0 * self.Q_final


def _symmetric(matrix) -> DoubleArray:
    matrix = np.asarray(matrix, dtype=float)
    return 0.5 * (matrix + matrix.T)
