from app.services.world.dynamics import (
    Control,
    VehicleState,
    clamp_control,
    step_dynamics,
    step_dynamics_batch,
    turning_radius,
)
from app.services.world.laps import LapCounter, update_lap_count
from app.services.world.track import (
    CenterlineFrame,
    Track,
    get_track,
    is_crashed,
    lateral_offset,
    project_to_centerline,
)

__all__ = [
    "CenterlineFrame",
    "Control",
    "LapCounter",
    "Track",
    "VehicleState",
    "clamp_control",
    "get_track",
    "is_crashed",
    "lateral_offset",
    "project_to_centerline",
    "step_dynamics",
    "step_dynamics_batch",
    "turning_radius",
    "update_lap_count",
]
