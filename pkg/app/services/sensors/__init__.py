from app.services.sensors.base import SensorChannel
from app.services.sensors.channels import RaySensor, StateSensor, build_sensors
from app.services.sensors.faults import (
    build_protocol_schedule,
    fault_active,
    phase_label,
    single_channel_schedule,
)
from app.services.sensors.observations import band_mask, observe_rays, observe_state, ray_angles

__all__ = [
    "RaySensor",
    "SensorChannel",
    "StateSensor",
    "band_mask",
    "build_protocol_schedule",
    "build_sensors",
    "fault_active",
    "observe_rays",
    "observe_state",
    "phase_label",
    "ray_angles",
    "single_channel_schedule",
]
