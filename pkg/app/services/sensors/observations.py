"""Observation models for the three channels and their fault corruptions."""
import math
from typing import Literal

import numpy as np
import numpy.typing as npt

from app.constants import PX, PY, THETA
from app.schemas import RayConfig, TrackSpec
from app.services.world.track import get_track

DoubleArray = npt.NDArray[np.float64]

# Faulted position offsets, in multiples of half_width, measured outward from the centerline
GPS_JUMP_MIN = 1.2
GPS_JUMP_MAX = 3.0


def observe_state(
    state, fault_active: bool, rng: np.random.Generator, track: TrackSpec
) -> DoubleArray:
    """State sensor. Exact copy when clean; a position jump outside the track when faulted.

    The faulty position is centerline(s) + d * outward normal with s ~ U[0, L) and
    d ~ U[1.2, 3] * half_width. The oval is convex, so that point's distance to the
    centerline is exactly d > half_width.
    """
    obs = np.array(state, dtype=float, copy=True)
    if not fault_active:
        return obs
    geometry = get_track(track)
    s = rng.uniform(0.0, geometry.length)
    d = rng.uniform(GPS_JUMP_MIN * track.half_width, GPS_JUMP_MAX * track.half_width)
    point, heading = geometry.centerline_point(s)
    # Outward = away from the infield: driver's right on a counterclockwise track
    side = 1.0 if geometry.clockwise else -1.0
    normal = np.array([-math.sin(heading[0]), math.cos(heading[0])])
    obs[PX], obs[PY] = point[0] + side * d * normal
    return obs


def ray_angles(theta: float, side: Literal["left", "right"], rays: RayConfig) -> DoubleArray:
    """World-frame ray angles: a fan of ray_count rays spanning fan_angle, edges included,
    centered on heading + 90 deg (left) or heading - 90 deg (right)."""
    center = theta + (math.pi / 2 if side == "left" else -math.pi / 2)
    half_fan = math.radians(rays.fan_angle_deg) / 2.0
    if rays.ray_count == 1:
        return np.array([center])
    return center + np.linspace(-half_fan, half_fan, rays.ray_count)


def band_mask(rays: RayConfig) -> npt.NDArray[np.bool_]:
    """Rays overwritten by the banding fault: every band_stride-th block of band_size rays."""
    block = np.arange(rays.ray_count) // rays.band_size
    return block % rays.band_stride == 0


def observe_rays(
    state,
    track: TrackSpec,
    side: Literal["left", "right"],
    fault_active: bool,
    rng: np.random.Generator,
    rays: RayConfig,
) -> DoubleArray:
    """Side-facing range array; banding fault fills the designated blocks with max_range / 2.

    Banding is deterministic, so ``rng`` is not drawn from.
    """
    state = np.asarray(state, dtype=float)
    angles = ray_angles(float(state[THETA]), side, rays)
    ranges = get_track(track).cast_rays(state[[PX, PY]], angles, rays.max_range)
    if fault_active:
        ranges = np.where(band_mask(rays), rays.max_range / 2.0, ranges)
    return ranges
