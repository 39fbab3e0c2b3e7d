from app.services.expert.cost import running_cost, terminal_cost
from app.services.expert.ilqg import (
    Gains,
    SolveResult,
    SolverTrace,
    TraceEntry,
    Trajectory,
    backward_pass,
    dump_trace,
    forward_pass,
    ilqg_solve,
    rollout,
)
from app.services.expert.mpc import ExpertController, mpc_step
from app.services.expert.problems import (
    LinearQuadraticProblem,
    OvalTrackingProblem,
    TrajectoryProblem,
    linearize_dynamics,
)

__all__ = [
    "ExpertController",
    "Gains",
    "LinearQuadraticProblem",
    "OvalTrackingProblem",
    "SolveResult",
    "SolverTrace",
    "TraceEntry",
    "Trajectory",
    "TrajectoryProblem",
    "backward_pass",
    "dump_trace",
    "forward_pass",
    "ilqg_solve",
    "linearize_dynamics",
    "mpc_step",
    "rollout",
    "running_cost",
    "terminal_cost",
]
