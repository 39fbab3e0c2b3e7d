"""Closed-loop episodes: a policy drives the simulated vehicle under a fault schedule.

Every episode writes a trajectory CSV and a JSONL event log into its own run directory
and returns a RunLog describing both.
"""
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Sequence

import numpy as np

from app.constants import CHANNELS
from app.schemas import ExperimentConfig, FaultSchedule, RunLog
from app.services.ensemble import EnsembleDecision, decide, ensemble_step, evaluate_learner
from app.services.expert import ExpertController
from app.services.harness.usage import usage_table
from app.services.learners import TrainedNetwork, reset_clamp_warnings
from app.services.sensors import build_protocol_schedule, build_sensors, phase_label
from app.services.world import (
    Control,
    LapCounter,
    VehicleState,
    clamp_control,
    get_track,
    is_crashed,
    step_dynamics,
)
from app.utils.io import EventLog, TrajectoryWriter
from app.utils.seeding import component_rng

logger = logging.getLogger(__name__)


class DrivingPolicy(ABC):
    """Maps the current observations to a control."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Run mode recorded in the RunLog."""
        pass

    @property
    @abstractmethod
    def learners(self) -> list[str]:
        """Channels of the learners this policy consults, in decision order."""
        pass

    @abstractmethod
    def act(
        self, observations: dict[str, np.ndarray], state: np.ndarray, t: float
    ) -> tuple[np.ndarray, EnsembleDecision | None]:
        """
        Choose the control for one step.

        Args:
            observations: Current observation of every sensor channel
            state: True vehicle state (only the expert reads it)
            t: Simulation time in seconds

        Returns:
            Clamped control vector and the decision to log, or None when there is nothing to log
        """
        pass


class ExpertPolicy(DrivingPolicy):
    """The MPC expert, reading the true state."""

    def __init__(self, config: ExperimentConfig):
        self.controller = ExpertController(config.track, config.vehicle, config.cost, config.ddp)

    @property
    def name(self) -> str:
        return "expert"

    @property
    def learners(self) -> list[str]:
        return []

    def act(self, observations, state, t):
        return clamp_control(self.controller.act(state)), None


class SingleLearnerPolicy(DrivingPolicy):
    """One learner's MC-mean control on its own channel."""

    def __init__(self, network: TrainedNetwork, samples: int, rng: np.random.Generator):
        self.network = network
        self.samples = samples
        self.rng = rng

    @property
    def name(self) -> str:
        return "single"

    @property
    def learners(self) -> list[str]:
        return [self.network.channel]

    def act(self, observations, state, t):
        report = evaluate_learner(self.network, observations[self.network.channel], self.samples, self.rng)
        decision = decide([self.network], [report], t)
        return decision.control, decision


class EnsemblePolicy(DrivingPolicy):
    """Minimum-variance arbitration (or the blending baseline) over all learners."""

    def __init__(
        self,
        networks: Sequence[TrainedNetwork],
        samples: int,
        rngs: Sequence[np.random.Generator],
        mode: str = "min_variance",
    ):
        self.networks = list(networks)
        self.samples = samples
        self.rngs = list(rngs)
        self.mode = mode

    @property
    def name(self) -> str:
        return "ensemble"

    @property
    def learners(self) -> list[str]:
        return [n.channel for n in self.networks]

    def act(self, observations, state, t):
        obs = [observations[n.channel] for n in self.networks]
        decision = ensemble_step(obs, self.networks, self.samples, self.rngs, t=t, mode=self.mode)
        return decision.control, decision


def start_state(config: ExperimentConfig) -> np.ndarray:
    """On the centerline at s = 0, aligned with it, rolling at the configured initial speed."""
    point, heading = get_track(config.track).centerline_point(0.0)
    return VehicleState(
        p_x=float(point[0, 0]),
        p_y=float(point[0, 1]),
        theta=float(heading[0]),
        V_x=config.simulation.initial_speed,
    ).as_array()


def default_schedule(config: ExperimentConfig) -> FaultSchedule:
    """The explicit schedule if one is configured, otherwise the robustness protocol."""
    if config.faults is not None:
        return config.faults
    return build_protocol_schedule(config.protocol, config.track, config.cost)


def drive_episode(
    config: ExperimentConfig,
    policy: DrivingPolicy,
    schedule: FaultSchedule,
    run_dir: Path,
    seed: int,
    lap_budget: int | None = None,
) -> RunLog:
    """Run one episode until a crash, the lap budget, or the step guard."""
    lap_budget = config.lap_budget if lap_budget is None else lap_budget
    track = get_track(config.track)
    dt = config.simulation.dt
    max_steps = lap_budget * config.simulation.max_steps_per_lap
    sensors = build_sensors(config, schedule, seed)
    counter = LapCounter(config.track, start_s=0.0)
    faulted = {c: False for c in CHANNELS}

    run_dir.mkdir(parents=True, exist_ok=True)
    trajectory_csv = run_dir / "trajectory.csv"
    events_jsonl = run_dir / "events.jsonl"
    state = start_state(config)
    step, crashed, end_reason = 0, False, "timeout"
    boundaries: list[int] = []

    with TrajectoryWriter(trajectory_csv) as writer, EventLog(events_jsonl) as events:
        while step < max_steps:
            t = step * dt
            observations = {name: sensor.observe(state, t) for name, sensor in sensors.items()}
            for name, sensor in sensors.items():
                if sensor.faulted != faulted[name]:
                    faulted[name] = sensor.faulted
                    events.append({"type": "fault", "t": t, "step": step, "channel": name, "active": sensor.faulted})
                    reset_clamp_warnings()
            if config.log_observations:
                events.append({"type": "observation", "t": t, "step": step, "channels": observations})

            control, decision = policy.act(observations, state, t)
            if decision is not None:
                record = decision.to_record()
                record.update(
                    step=step,
                    lap=counter.laps,
                    phase=phase_label(schedule, t),
                    faulted=[c for c in CHANNELS if faulted[c]],
                )
                events.append(record)

            command = Control.from_array(control)
            next_state = step_dynamics(state, command, dt, config.vehicle)
            crashed = is_crashed(next_state, config.track)
            writer.write(step, t, state, command.as_array(), counter.laps, crashed)
            state = next_state
            step += 1

            if crashed:
                end_reason = "crash"
                events.append({"type": "crash", "t": step * dt, "step": step - 1, "lap": counter.laps})
                logger.info("[%s] crashed at step %d (lap %d)", policy.name, step - 1, counter.laps)
                break
            if counter.update(float(track.project(state[None, :2]).s[0])):
                boundaries.append(step)
                events.append({"type": "lap", "t": step * dt, "step": step, "lap": counter.laps})
                logger.info("[%s] lap %d completed at step %d", policy.name, counter.laps, step)
                if counter.laps >= lap_budget:
                    end_reason = "lap_budget"
                    break

        if end_reason == "timeout":
            logger.warning("[%s] step guard reached after %d steps", policy.name, step)
        events.append({"type": "end", "t": step * dt, "steps": step, "laps": counter.laps, "reason": end_reason})

    log = RunLog(
        mode=policy.name,
        learners=policy.learners,
        run_dir=run_dir,
        trajectory_csv=trajectory_csv,
        events_jsonl=events_jsonl,
        steps=step,
        laps_completed=counter.laps,
        crashed=crashed,
        crash_step=step - 1 if crashed else None,
        end_reason=end_reason,
        lap_boundaries=boundaries,
        seed=seed,
    )
    if policy.learners:
        log = log.model_copy(update={"lap_usage": usage_table(log)})
    (run_dir / "run.json").write_text(log.model_dump_json(indent=2))
    return log


def run_expert(
    config: ExperimentConfig, run_dir: Path, seed: int, laps: int, schedule: FaultSchedule | None = None
) -> RunLog:
    """Closed-loop expert check; sensors are simulated but unused."""
    return drive_episode(config, ExpertPolicy(config), schedule or FaultSchedule(), run_dir, seed, laps)


def run_single_learner(
    config: ExperimentConfig,
    network: TrainedNetwork,
    schedule: FaultSchedule,
    run_dir: Path,
    seed: int,
    lap_budget: int | None = None,
) -> RunLog:
    policy = SingleLearnerPolicy(network, config.mc_samples, component_rng(seed, f"mc/{network.channel}"))
    return drive_episode(config, policy, schedule, run_dir, seed, lap_budget)


def run_ensemble(
    config: ExperimentConfig,
    networks: Sequence[TrainedNetwork],
    schedule: FaultSchedule,
    run_dir: Path,
    seed: int,
    lap_budget: int | None = None,
) -> RunLog:
    rngs = [component_rng(seed, f"mc/{n.channel}") for n in networks]
    policy = EnsemblePolicy(networks, config.mc_samples, rngs, mode=config.arbiter)
    return drive_episode(config, policy, schedule, run_dir, seed, lap_budget)
