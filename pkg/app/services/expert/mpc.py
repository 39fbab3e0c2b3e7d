"""Receding-horizon expert: re-solve every step, execute only the first control."""
import logging

import numpy as np

from app.schemas import CostConfig, DDPConfig, TrackSpec, VehicleConfig
from app.services.expert.ilqg import SolveResult, ilqg_solve
from app.services.expert.problems import OvalTrackingProblem, TrajectoryProblem

logger = logging.getLogger(__name__)


def shift_warm_start(previous: SolveResult | None, horizon: int, control_dim: int) -> np.ndarray:
    """Previous controls advanced by one step with the last one repeated; zeros when cold."""
    if previous is None:
        return np.zeros((horizon, control_dim))
    controls = previous.trajectory.controls
    return np.vstack([controls[1:], controls[-1:]])


def mpc_step(
    problem: TrajectoryProblem,
    x0,
    previous: SolveResult | None,
    config: DDPConfig,
) -> tuple[np.ndarray, SolveResult]:
    """One receding-horizon step. Returns (first control, new solution).

    The control is returned even if the solver accepted no step (solution.improved False).
    """
    warm_start = shift_warm_start(previous, config.horizon, problem.control_dim)
    solution = ilqg_solve(problem, x0, warm_start, config)
    return solution.trajectory.controls[0].copy(), solution


class ExpertController:
    """Stateful MPC expert for one episode; keeps the last solution as the next warm start."""

    def __init__(
        self,
        track: TrackSpec,
        vehicle: VehicleConfig,
        cost: CostConfig,
        ddp: DDPConfig,
    ):
        self.ddp = ddp
        self.problem = OvalTrackingProblem(track, vehicle, cost, ddp.dt, fd_step=ddp.fd_step)
        self.solution: SolveResult | None = None
        self.unimproved_steps = 0

    def reset(self) -> None:
        self.solution = None
        self.unimproved_steps = 0

    def act(self, state) -> np.ndarray:
        control, self.solution = mpc_step(self.problem, np.asarray(state, dtype=float), self.solution, self.ddp)
        if not self.solution.improved and not self.solution.converged:
            self.unimproved_steps += 1
            logger.debug("expert solve made no progress (%d so far)", self.unimproved_steps)
        return control
