"""Iterative LQG (Gauss-Newton DDP) with backtracking line search and Levenberg regularization."""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.errors import NonFiniteError, NotPositiveDefiniteError
from app.schemas import DDPConfig
from app.services.expert.problems import LocalExpansion, TrajectoryProblem
from app.utils.io import write_csv

logger = logging.getLogger(__name__)

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class Trajectory:
    """Nominal trajectory: states (H+1, n), controls (H, m) and the total cost."""

    states: DoubleArray
    controls: DoubleArray
    total_cost: float

    def __post_init__(self) -> None:
        if self.states.ndim != 2 or self.controls.ndim != 2:
            raise ValueError("expected stacked 2-D state and control arrays")
        if len(self.states) != len(self.controls) + 1:
            raise ValueError(
                f"{len(self.states)} states for {len(self.controls)} controls; need one more state than controls"
            )

    @property
    def horizon(self) -> int:
        return len(self.controls)


@dataclass(frozen=True)
class Gains:
    """Output of a successful backward pass."""

    k: DoubleArray  # (H, m) feedforward
    K: DoubleArray  # (H, m, n) feedback
    dV: tuple[float, float]  # linear and quadratic terms of the predicted cost change

    def expected_decrease(self, alpha: float = 1.0) -> float:
        """Model-predicted cost reduction of a forward pass with step alpha (>= 0)."""
        return -(alpha * self.dV[0] + alpha**2 * self.dV[1])


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    cost: float
    regularization: float
    alpha: float
    accepted: bool


SolverTrace = list[TraceEntry]


@dataclass
class SolveResult:
    trajectory: Trajectory
    improved: bool
    converged: bool
    trace: SolverTrace = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max((e.iteration for e in self.trace), default=0)

    def accepted_costs(self) -> list[float]:
        return [e.cost for e in self.trace if e.accepted]


def rollout(problem: TrajectoryProblem, x0, controls) -> Trajectory:
    """Simulate controls (already within bounds) from x0 and evaluate the cost."""
    x = np.asarray(x0, dtype=float)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    states = np.empty((len(controls) + 1, len(x)))
    states[0] = x
    for t, u in enumerate(controls):
        states[t + 1] = problem.step(states[t], u)
    return Trajectory(states=states, controls=controls, total_cost=trajectory_cost(problem, states, controls))


def trajectory_cost(problem: TrajectoryProblem, states, controls) -> float:
    return float(np.sum(problem.stage_costs(states[:-1], controls)) + problem.terminal_cost(states[-1]))


def backward_pass(
    problem: TrajectoryProblem,
    traj: Trajectory,
    regularization: float,
    expansion: LocalExpansion | None = None,
) -> Gains:
    """Riccati-like sweep on the quadratic value model.

    regularization * I is added to Q_uu before the Cholesky check. Raises
    NotPositiveDefiniteError when the regularized control Hessian is not positive definite.
    """
    if expansion is None:
        expansion = problem.expand(traj.states, traj.controls)
    st = expansion.stage
    horizon, m = traj.controls.shape
    n = traj.states.shape[1]

    k = np.zeros((horizon, m))
    K = np.zeros((horizon, m, n))
    dV1 = dV2 = 0.0
    Vx = expansion.lx_final.copy()
    Vxx = expansion.lxx_final.copy()
    reg = regularization * np.eye(m)

    for t in range(horizon - 1, -1, -1):
        A, B = expansion.A[t], expansion.B[t]
        Qx = st.lx[t] + A.T @ Vx
        Qu = st.lu[t] + B.T @ Vx
        Qxx = st.lxx[t] + A.T @ Vxx @ A
        Quu = st.luu[t] + B.T @ Vxx @ B
        Qux = st.lux[t] + B.T @ Vxx @ A
        if not (np.all(np.isfinite(Quu)) and np.all(np.isfinite(Qux))):
            raise NonFiniteError(f"non-finite value model at step {t}")

        try:
            factor = cho_factor(Quu + reg)
        except LinAlgError:
            raise NotPositiveDefiniteError(t, regularization) from None
        gains = -cho_solve(factor, np.column_stack([Qu, Qux]))
        k[t], K[t] = gains[:, 0], gains[:, 1:]

        dV1 += float(k[t] @ Qu)
        dV2 += float(0.5 * k[t] @ Quu @ k[t])
        Vx = Qx + K[t].T @ Quu @ k[t] + K[t].T @ Qu + Qux.T @ k[t]
        Vxx = Qxx + K[t].T @ Quu @ K[t] + K[t].T @ Qux + Qux.T @ K[t]
        Vxx = 0.5 * (Vxx + Vxx.T)

    return Gains(k=k, K=K, dV=(dV1, dV2))


def forward_pass(problem: TrajectoryProblem, traj: Trajectory, gains: Gains, alpha: float) -> Trajectory:
    """Roll out u_t = clamp(u_bar_t + alpha k_t + K_t (x_t - x_bar_t)) from the nominal x_0."""
    states = np.empty_like(traj.states)
    controls = np.empty_like(traj.controls)
    states[0] = traj.states[0]
    for t in range(traj.horizon):
        dx = problem.state_difference(states[t], traj.states[t])
        u = traj.controls[t] + alpha * gains.k[t] + gains.K[t] @ dx
        controls[t] = problem.clamp(u)
        states[t + 1] = problem.step(states[t], controls[t])
    return Trajectory(states=states, controls=controls, total_cost=trajectory_cost(problem, states, controls))


def ilqg_solve(problem: TrajectoryProblem, x0, warm_start, config: DDPConfig) -> SolveResult:
    """Optimize from a warm-start control sequence.

    Only strictly cost-decreasing steps are accepted, so the returned cost never exceeds the
    warm-start rollout. If nothing is accepted the warm-start rollout comes back with
    improved=False.
    """
    traj = rollout(problem, x0, problem.clamp(warm_start))
    if not np.isfinite(traj.total_cost):
        raise NonFiniteError("warm-start rollout has non-finite cost")

    lam = config.lambda_init
    trace = [TraceEntry(0, traj.total_cost, lam, 0.0, True)]
    improved = converged = False
    expansion: LocalExpansion | None = None

    for iteration in range(1, config.max_iterations + 1):
        if expansion is None:
            expansion = problem.expand(traj.states, traj.controls)
        try:
            gains = backward_pass(problem, traj, lam, expansion)
        except NotPositiveDefiniteError as exc:
            logger.debug("%s, raising regularization", exc)
            lam = _increase(lam, config)
            if lam > config.lambda_max:
                break
            continue

        if gains.expected_decrease(1.0) < config.convergence_tol:
            converged = True
            break

        alpha, candidate = 1.0, None
        for _ in range(config.line_search_steps):
            trial = forward_pass(problem, traj, gains, alpha)
            if trial.total_cost < traj.total_cost:
                candidate = trial
                break
            alpha *= 0.5

        if candidate is None:
            trace.append(TraceEntry(iteration, traj.total_cost, lam, alpha, False))
            lam = _increase(lam, config)
            if lam > config.lambda_max:
                break
            continue

        improvement = traj.total_cost - candidate.total_cost
        traj, expansion, improved = candidate, None, True
        trace.append(TraceEntry(iteration, traj.total_cost, lam, alpha, True))
        lam = max(lam * config.lambda_shrink, config.lambda_min)
        if improvement < config.convergence_tol:
            converged = True
            break

    if not improved:
        logger.debug("iLQG accepted no step; returning warm-start rollout")
    return SolveResult(trajectory=traj, improved=improved, converged=converged, trace=trace)


def _increase(lam: float, config: DDPConfig) -> float:
    return max(lam * config.lambda_growth, config.lambda_min, 1e-12)


def dump_trace(trace: SolverTrace, path: Path) -> Path:
    """Write the solver trace as CSV (iteration, cost, lambda, alpha, accepted)."""
    write_csv(
        path,
        ["iteration", "cost", "lambda", "alpha", "accepted"],
        [[e.iteration, e.cost, e.regularization, e.alpha, int(e.accepted)] for e in trace],
    )
    return path
