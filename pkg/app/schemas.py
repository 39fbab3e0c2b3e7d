import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.constants import CHANNELS, CONFIG_SCHEMA_VERSION, LARGE_HIDDEN_WIDTHS

Channel = Literal["state", "left", "right"]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# World schemas
class TrackSpec(_Frozen):
    straight_length: float = 10.0  # meters
    turn_radius: float = 3.0  # centerline radius of each end
    half_width: float = 1.5  # centerline-to-boundary distance
    direction: Literal["counterclockwise", "clockwise"] = "counterclockwise"

    @model_validator(mode="after")
    def _check_geometry(self):
        if self.straight_length < 0:
            raise ValueError("straight_length must be >= 0")
        if not (self.turn_radius > self.half_width > 0):
            raise ValueError("need turn_radius > half_width > 0")
        return self

    @property
    def length(self) -> float:
        return 2.0 * self.straight_length + 2.0 * math.pi * self.turn_radius


class VehicleConfig(_Frozen):
    wheelbase: float = Field(0.57, gt=0)
    max_steering_angle: float = Field(0.35, gt=0, lt=math.pi / 2)
    max_speed: float = Field(8.0, gt=0)
    velocity_time_constant: float = Field(0.6, gt=0)  # may be inf for a lag-free model


class SimulationConfig(_Frozen):
    dt: float = Field(0.05, gt=0)  # 20 Hz
    initial_speed: float = Field(5.0, ge=0)
    max_steps_per_lap: int = Field(600, ge=1)


class CollectionConfig(_Frozen):
    """Exploration noise on the executed control while the expert is recorded.

    The dataset label is always the expert's own control; only the car is pushed off its line.
    Noise is held at zero while the car is more than noise_offset_limit * half_width off center.
    """

    control_noise: tuple[float, float] = (0.3, 0.05)  # stationary std (steering, throttle)
    noise_time_constant: float = Field(0.25, gt=0)  # s
    noise_offset_limit: float = Field(0.5, ge=0, le=1)

    @field_validator("control_noise")
    @classmethod
    def _check_noise(cls, value):
        if any(not (0 <= v <= 1) for v in value):
            raise ValueError("control_noise entries must lie in [0, 1]")
        return value


class RayConfig(_Frozen):
    ray_count: int = Field(32, ge=1)
    fan_angle_deg: float = Field(120.0, gt=0, lt=360)
    max_range: float = Field(10.0, gt=0)
    band_size: int = Field(4, ge=1)
    band_stride: int = Field(2, ge=1)


# Expert schemas
class DDPConfig(_Frozen):
    horizon: int = Field(40, ge=2)
    dt: float = Field(0.05, gt=0)
    max_iterations: int = Field(15, ge=1)
    lambda_init: float = Field(1e-6, ge=0)
    lambda_growth: float = Field(10.0, gt=1)
    lambda_shrink: float = Field(0.5, gt=0, lt=1)
    lambda_min: float = Field(1e-9, ge=0)
    lambda_max: float = Field(1e10, gt=0)
    line_search_steps: int = Field(8, ge=1)
    convergence_tol: float = Field(1e-4, gt=0)
    fd_step: float = Field(1e-5, gt=0)


class CostConfig(_Frozen):
    w_lateral: float = Field(4.0, ge=0)
    w_velocity: float = Field(0.5, ge=0)
    v_x_des: float = 5.0
    w_control: float = Field(0.1, ge=0)  # shared by steering and throttle


# Learner schemas
class MLPSpec(_Frozen):
    input_dim: int = Field(ge=1)
    hidden_widths: tuple[int, ...] = (64, 64)
    output_dim: int = Field(2, ge=1)
    activation: Literal["relu"] = "relu"
    dropout_rate: float = Field(0.1, ge=0, lt=1)
    dropout_mode: Literal["fixed", "concrete"] = "fixed"
    temperature: float = Field(0.1, gt=0)  # concrete relaxation
    weight_regularizer: float = Field(1e-6, ge=0)
    dropout_regularizer: float = Field(1e-5, ge=0)

    @model_validator(mode="after")
    def _check_widths(self):
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden_widths must be a non-empty list of positive widths")
        return self


class TrainingConfig(_Frozen):
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    log_every: int = Field(20, ge=1)


class LearnerConfig(_Frozen):
    hidden_widths: tuple[int, ...] = (64, 64)
    hidden_preset: Literal["custom", "large"] = "custom"
    dropout_rate: float = Field(0.1, ge=0, lt=1)
    dropout_mode: Literal["fixed", "concrete"] = "fixed"
    temperature: float = Field(0.1, gt=0)
    training: TrainingConfig = TrainingConfig()

    def to_spec(self, input_dim: int, output_dim: int = 2) -> MLPSpec:
        widths = LARGE_HIDDEN_WIDTHS if self.hidden_preset == "large" else self.hidden_widths
        return MLPSpec(
            input_dim=input_dim,
            hidden_widths=tuple(widths),
            output_dim=output_dim,
            dropout_rate=self.dropout_rate,
            dropout_mode=self.dropout_mode,
            temperature=self.temperature,
        )


def _default_learners() -> dict[str, LearnerConfig]:
    return {
        "state": LearnerConfig(hidden_widths=(64, 64)),
        "left": LearnerConfig(hidden_widths=(128, 64)),
        "right": LearnerConfig(hidden_widths=(128, 64)),
    }


# Fault schemas
class FaultWindow(_Frozen):
    channel: Channel
    start: float = Field(ge=0)  # seconds
    end: float  # seconds, exclusive
    duty_cycle: float = Field(0.7, gt=0, le=1)
    burst_period: float = Field(1.0, gt=0)
    gating: Literal["phase", "random"] = "phase"
    label: str | None = None

    @model_validator(mode="after")
    def _check_interval(self):
        if self.end <= self.start:
            raise ValueError("fault window end must be after start")
        return self


class FaultSchedule(_Frozen):
    windows: tuple[FaultWindow, ...] = ()

    @model_validator(mode="after")
    def _check_overlap(self):
        for channel in CHANNELS:
            spans = sorted((w.start, w.end) for w in self.windows if w.channel == channel)
            for (_, prev_end), (start, _) in zip(spans, spans[1:]):
                if start < prev_end:
                    raise ValueError(f"overlapping fault windows on channel '{channel}'")
        return self

    def for_channel(self, channel: str) -> list[FaultWindow]:
        return [w for w in self.windows if w.channel == channel]


class ProtocolConfig(_Frozen):
    clean_laps: int = Field(4, ge=0)
    window_laps: int = Field(2, ge=1)
    gap_laps: int = Field(2, ge=0)
    total_laps: int = Field(17, ge=1)
    sequence: tuple[tuple[Channel, ...], ...] = (("state",), ("left",), ("left", "right"))
    duty_cycle: float = Field(0.7, gt=0, le=1)
    burst_period: float = Field(1.0, gt=0)


class ExperimentConfig(_Frozen):
    schema_version: int = CONFIG_SCHEMA_VERSION
    master_seed: int = 0
    track: TrackSpec = TrackSpec()
    vehicle: VehicleConfig = VehicleConfig()
    simulation: SimulationConfig = SimulationConfig()
    rays: RayConfig = RayConfig()
    ddp: DDPConfig = DDPConfig()
    cost: CostConfig = CostConfig()
    learners: dict[Channel, LearnerConfig] = Field(default_factory=_default_learners)
    mc_samples: int = Field(10, ge=1)
    collection_laps: int = Field(20, ge=0)
    collection: CollectionConfig = CollectionConfig()
    lap_budget: int = Field(17, ge=1)
    arbiter: Literal["min_variance", "blend"] = "min_variance"
    log_observations: bool = True  # per-step sensor readings in the event log
    protocol: ProtocolConfig = ProtocolConfig()
    faults: FaultSchedule | None = None  # explicit schedule overrides the protocol

    @field_validator("learners", mode="before")
    @classmethod
    def _fill_learners(cls, value):
        """Channels without a learner section get their default one."""
        if isinstance(value, dict):
            return {**_default_learners(), **value}
        return value

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {self.schema_version}, expected {CONFIG_SCHEMA_VERSION}"
            )
        if not math.isclose(self.ddp.dt, self.simulation.dt):
            raise ValueError("ddp.dt must equal simulation.dt")
        return self

    def learner_spec(self, channel: str) -> MLPSpec:
        input_dim = 7 if channel == "state" else self.rays.ray_count
        return self.learners[channel].to_spec(input_dim)


# Run log schemas
class LapUsage(BaseModel):
    group: str
    steps: int
    fractions: dict[str, float]


class RunLog(BaseModel):
    mode: Literal["single", "ensemble", "expert"]
    learners: list[str]
    run_dir: Path
    trajectory_csv: Path
    events_jsonl: Path
    steps: int = 0
    laps_completed: int = 0
    crashed: bool = False
    crash_step: int | None = None
    end_reason: Literal["crash", "lap_budget", "timeout"] = "lap_budget"
    lap_boundaries: list[int] = []
    lap_usage: list[LapUsage] = []
    seed: int = 0

    @model_validator(mode="after")
    def _check_boundaries(self):
        bounds = self.lap_boundaries
        if any(prev >= nxt for prev, nxt in zip(bounds, bounds[1:])):
            raise ValueError("lap boundaries must be strictly increasing")
        return self


class DatasetPaths(BaseModel):
    state: Path
    left: Path
    right: Path
    rows: int

    def for_channel(self, channel: str) -> Path:
        return getattr(self, channel)
