from typing import Literal

import numpy as np

from app.constants import STATE_DIM
from app.schemas import ExperimentConfig, FaultSchedule, RayConfig, TrackSpec
from app.services.sensors.base import SensorChannel
from app.services.sensors.observations import observe_rays, observe_state
from app.utils.seeding import component_rng


class StateSensor(SensorChannel):
    """Fully observable state, the GPS-style channel."""

    def __init__(self, track: TrackSpec, schedule: FaultSchedule, rng: np.random.Generator):
        super().__init__(schedule, rng)
        self.track = track

    @property
    def name(self) -> str:
        return "state"

    @property
    def input_dim(self) -> int:
        return STATE_DIM

    def _read(self, state: np.ndarray, faulted: bool) -> np.ndarray:
        return observe_state(state, faulted, self.rng, self.track)


class RaySensor(SensorChannel):
    """Side-mounted range fan, standing in for one camera."""

    def __init__(
        self,
        track: TrackSpec,
        side: Literal["left", "right"],
        rays: RayConfig,
        schedule: FaultSchedule,
        rng: np.random.Generator,
    ):
        super().__init__(schedule, rng)
        self.track = track
        self.side = side
        self.rays = rays

    @property
    def name(self) -> str:
        return self.side

    @property
    def input_dim(self) -> int:
        return self.rays.ray_count

    def _read(self, state: np.ndarray, faulted: bool) -> np.ndarray:
        return observe_rays(state, self.track, self.side, faulted, self.rng, self.rays)


def build_sensors(
    config: ExperimentConfig, schedule: FaultSchedule, seed: int
) -> dict[str, SensorChannel]:
    """All three channels, each with its own stream derived from ``seed``."""
    return {
        "state": StateSensor(config.track, schedule, component_rng(seed, "sensor/state")),
        "left": RaySensor(config.track, "left", config.rays, schedule, component_rng(seed, "sensor/left")),
        "right": RaySensor(config.track, "right", config.rays, schedule, component_rng(seed, "sensor/right")),
    }
