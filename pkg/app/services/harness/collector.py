"""Expert data collection: one aligned (observation, expert control) dataset per channel."""
import logging
import math
from pathlib import Path

import numpy as np

from app.config import config_hash
from app.constants import CHANNELS, STATE_DIM
from app.errors import ExpertCrashError
from app.schemas import CollectionConfig, DatasetPaths, ExperimentConfig, FaultSchedule
from app.services.expert import ExpertController
from app.services.harness.driver import start_state
from app.services.sensors import build_sensors
from app.services.world import LapCounter, clamp_control, get_track, is_crashed, lateral_offset, step_dynamics
from app.utils.io import TrajectoryWriter, write_dataset
from app.utils.seeding import component_rng

logger = logging.getLogger(__name__)

CHANNEL_UNITS = {
    "state": "m,m,rad,rad,m/s,m/s,rad/s",
    "left": "m",
    "right": "m",
}


def dataset_path(out_dir: Path, channel: str) -> Path:
    return out_dir / f"{channel}.csv"


class ControlNoise:
    """Ornstein-Uhlenbeck exploration noise added to the executed control during collection."""

    def __init__(self, collection: CollectionConfig, dt: float, rng: np.random.Generator):
        self.scale = np.asarray(collection.control_noise, dtype=float)
        self.decay = math.exp(-dt / collection.noise_time_constant)
        self.rng = rng
        self.value = np.zeros(2)

    def sample(self) -> np.ndarray:
        shock = self.rng.standard_normal(2) * self.scale * math.sqrt(1.0 - self.decay**2)
        self.value = self.decay * self.value + shock
        return self.value


def collect_dataset(config: ExperimentConfig, laps: int, out_dir: Path, seed: int) -> DatasetPaths:
    """Drive the MPC expert for ``laps`` laps on clean sensors and record every step.

    Every row is labeled with the expert's control, but the car executes that control plus
    exploration noise (see CollectionConfig), so the data also shows how the expert recovers
    from off-center poses. The executed trajectory goes to expert_trajectory.csv; if the car
    leaves the track, collection stops with ExpertCrashError pointing at that file.
    """
    track = get_track(config.track)
    dt = config.simulation.dt
    sensors = build_sensors(config, FaultSchedule(), seed)
    expert = ExpertController(config.track, config.vehicle, config.cost, config.ddp)
    counter = LapCounter(config.track)
    max_steps = laps * config.simulation.max_steps_per_lap
    noise = ControlNoise(config.collection, dt, component_rng(seed, "collect/noise"))
    noise_band = config.collection.noise_offset_limit * config.track.half_width

    observations: dict[str, list[np.ndarray]] = {c: [] for c in CHANNELS}
    controls: list[np.ndarray] = []
    state = start_state(config)
    dump = out_dir / "expert_trajectory.csv"
    step = 0

    with TrajectoryWriter(dump) as writer:
        while counter.laps < laps and step < max_steps:
            t = step * dt
            for name, sensor in sensors.items():
                observations[name].append(sensor.observe(state, t))
            label = clamp_control(expert.act(state))
            controls.append(label)

            perturbation = noise.sample()
            if abs(lateral_offset(state[:2], config.track)) > noise_band:
                perturbation = np.zeros(2)
            executed = clamp_control(label + perturbation)
            next_state = step_dynamics(state, executed, dt, config.vehicle)
            crashed = is_crashed(next_state, config.track)
            writer.write(step, t, state, executed, counter.laps, crashed)
            if crashed:
                raise ExpertCrashError(step, dump)
            state = next_state
            step += 1
            if counter.update(float(track.project(state[None, :2]).s[0])):
                logger.info("collection lap %d/%d done (%d rows)", counter.laps, laps, step)

    if counter.laps < laps:
        logger.warning("collection stopped by the step guard after %d of %d laps", counter.laps, laps)

    digest = config_hash(config)
    targets = np.array(controls).reshape(-1, 2)
    for channel in CHANNELS:
        dims = STATE_DIM if channel == "state" else config.rays.ray_count
        obs = np.array(observations[channel]).reshape(-1, dims)
        write_dataset(dataset_path(out_dir, channel), channel, obs, targets, CHANNEL_UNITS[channel], seed, digest)
    logger.info("wrote %d rows per channel to %s", step, out_dir)
    return DatasetPaths(
        state=dataset_path(out_dir, "state"),
        left=dataset_path(out_dir, "left"),
        right=dataset_path(out_dir, "right"),
        rows=step,
    )
