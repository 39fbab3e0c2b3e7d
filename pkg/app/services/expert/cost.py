"""Centerline + speed tracking cost of the expert.

    l(x, u)  = w_lateral * d(p)^2 + w_velocity * (V_x - V_x_des)^2 + w_control * |u|^2
    l_f(x)   = w_lateral * d(p)^2 + w_velocity * (V_x - V_x_des)^2

d(p) is the signed lateral offset of the position from the centerline, taken at the
projection of each predicted state.
"""
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.constants import CONTROL_DIM, PX, PY, STATE_DIM, VX
from app.schemas import CostConfig, TrackSpec
from app.services.world.track import get_track

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class CostDerivatives:
    """Gauss-Newton expansion of the stage costs along a trajectory."""

    lx: DoubleArray  # (H, n)
    lu: DoubleArray  # (H, m)
    lxx: DoubleArray  # (H, n, n)
    luu: DoubleArray  # (H, m, m)
    lux: DoubleArray  # (H, m, n)


def state_costs(states, cost: CostConfig, track: TrackSpec) -> DoubleArray:
    """State-dependent terms for stacked states (N, 7); also the terminal cost."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    offset = get_track(track).project(states[:, [PX, PY]]).lateral_offset
    speed_error = states[:, VX] - cost.v_x_des
    return cost.w_lateral * offset**2 + cost.w_velocity * speed_error**2


def stage_costs(states, controls, cost: CostConfig, track: TrackSpec) -> DoubleArray:
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    return state_costs(states, cost, track) + cost.w_control * np.sum(controls**2, axis=1)


def running_cost(state, control, cost: CostConfig, track: TrackSpec) -> float:
    """Stage cost of one (state, control) pair."""
    return float(stage_costs(np.asarray(state)[None], np.asarray(control)[None], cost, track)[0])


def terminal_cost(state, cost: CostConfig, track: TrackSpec) -> float:
    return float(state_costs(np.asarray(state)[None], cost, track)[0])


def state_cost_derivatives(states, cost: CostConfig, track: TrackSpec):
    """Gradient (N, n) and Gauss-Newton Hessian (N, n, n) of the state terms.

    The offset gradient is the unit left normal at the nearest centerline point, so the
    lateral block of the Hessian is 2 w_lateral n n^T (curvature of d is dropped).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    proj = get_track(track).project(states[:, [PX, PY]])
    normal = np.stack([-np.sin(proj.heading), np.cos(proj.heading)], axis=1)
    count = len(states)

    lx = np.zeros((count, STATE_DIM))
    lxx = np.zeros((count, STATE_DIM, STATE_DIM))
    lx[:, [PX, PY]] = 2.0 * cost.w_lateral * proj.lateral_offset[:, None] * normal
    lxx[:, PX:PY + 1, PX:PY + 1] = 2.0 * cost.w_lateral * normal[:, :, None] * normal[:, None, :]
    lx[:, VX] = 2.0 * cost.w_velocity * (states[:, VX] - cost.v_x_des)
    lxx[:, VX, VX] = 2.0 * cost.w_velocity
    return lx, lxx


def stage_cost_derivatives(states, controls, cost: CostConfig, track: TrackSpec) -> CostDerivatives:
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    lx, lxx = state_cost_derivatives(states, cost, track)
    count = len(controls)
    lu = 2.0 * cost.w_control * controls
    luu = np.broadcast_to(2.0 * cost.w_control * np.eye(CONTROL_DIM), (count, CONTROL_DIM, CONTROL_DIM)).copy()
    lux = np.zeros((count, CONTROL_DIM, STATE_DIM))
    return CostDerivatives(lx=lx, lu=lu, lxx=lxx, luu=luu, lux=lux)
