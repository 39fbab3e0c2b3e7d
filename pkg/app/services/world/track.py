"""Oval track geometry: centerline projection, centerline sampling and boundary ray casting.

The centerline is built counterclockwise from four pieces:

    0: bottom straight  (-a, -R) -> (a, -R)
    1: right arc        centre (a, 0),  angle -pi/2 -> pi/2
    2: top straight     (a, R)   -> (-a, R)
    3: left arc         centre (-a, 0), angle pi/2 -> 3pi/2

with a = straight_length / 2 and R = turn_radius. A clockwise track reuses the same
geometry; stations are then measured the other way round and lateral offsets flip sign,
so "positive offset" always means the driver's left.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from app.schemas import TrackSpec
from app.utils.numerics import wrap_angle

DoubleArray = npt.NDArray[np.float64]

# Distances within this of the minimum count as ties (resolved by smallest station)
TIE_TOLERANCE = 1e-12
# Ray hits closer than this to the origin are ignored
RAY_EPSILON = 1e-9


@dataclass(frozen=True)
class CenterlineFrame:
    """Nearest-centerline description of a point."""

    s: float
    lateral_offset: float
    nearest_point: tuple[float, float]
    tangent_heading: float

    def __post_init__(self) -> None:
        if self.s < 0.0:
            raise ValueError(f"station must be non-negative, got {self.s}")


@dataclass(frozen=True)
class Projection:
    """Vectorized projection result, one entry per query point."""

    s: DoubleArray
    lateral_offset: DoubleArray
    nearest: DoubleArray  # (N, 2)
    heading: DoubleArray


class Track:
    """Precomputed geometry for a TrackSpec."""

    def __init__(self, spec: TrackSpec):
        self.spec = spec
        self.a = spec.straight_length / 2.0
        self.radius = spec.turn_radius
        self.half_width = spec.half_width
        self.length = spec.length
        self.clockwise = spec.direction == "clockwise"
        self._s_offsets = (
            0.0,
            spec.straight_length,
            spec.straight_length + math.pi * self.radius,
            2.0 * spec.straight_length + math.pi * self.radius,
        )

    # Centerline projection
    def _ccw_candidates(self, x: DoubleArray, y: DoubleArray):
        """Nearest point on each of the four pieces. Arrays of shape (N, 4)."""
        a, r = self.a, self.radius
        _, s2, s3, s4 = self._s_offsets

        # Bottom straight
        xb = np.clip(x, -a, a)
        nx0, ny0 = xb, np.full_like(x, -r)
        st0 = xb + a
        h0 = np.zeros_like(x)

        # Right arc
        phi = np.clip(np.arctan2(y, x - a), -math.pi / 2, math.pi / 2)
        nx1, ny1 = a + r * np.cos(phi), r * np.sin(phi)
        st1 = s2 + r * (phi + math.pi / 2)
        h1 = phi + math.pi / 2

        # Top straight
        xt = np.clip(x, -a, a)
        nx2, ny2 = xt, np.full_like(x, r)
        st2 = s3 + (a - xt)
        h2 = np.full_like(x, math.pi)

        # Left arc
        psi = np.clip(np.mod(np.arctan2(y, x + a), 2 * math.pi), math.pi / 2, 3 * math.pi / 2)
        nx3, ny3 = -a + r * np.cos(psi), r * np.sin(psi)
        st3 = s4 + r * (psi - math.pi / 2)
        h3 = psi + math.pi / 2

        nx = np.stack([nx0, nx1, nx2, nx3], axis=1)
        ny = np.stack([ny0, ny1, ny2, ny3], axis=1)
        st = np.mod(np.stack([st0, st1, st2, st3], axis=1), self.length)
        hd = np.stack([h0, h1, h2, h3], axis=1)
        return nx, ny, st, hd

    def project(self, points) -> Projection:
        """Project points (N, 2) onto the centerline (exact piecewise closed form)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        nx, ny, st, hd = self._ccw_candidates(x, y)
        if self.clockwise:
            st = np.mod(self.length - st, self.length)
            hd = hd + math.pi

        dx = x[:, None] - nx
        dy = y[:, None] - ny
        dist = np.hypot(dx, dy)

        # Tie rule: among candidates within tolerance of the minimum, take smallest station
        best = dist.min(axis=1, keepdims=True)
        ranked = np.where(dist <= best + TIE_TOLERANCE, st, np.inf)
        idx = np.argmin(ranked, axis=1)
        rows = np.arange(len(x))

        heading = wrap_angle(hd[rows, idx])
        normal_x, normal_y = -np.sin(heading), np.cos(heading)
        side = dx[rows, idx] * normal_x + dy[rows, idx] * normal_y
        offset = np.where(side < 0, -dist[rows, idx], dist[rows, idx])
        nearest = np.stack([nx[rows, idx], ny[rows, idx]], axis=1)
        return Projection(s=st[rows, idx], lateral_offset=offset, nearest=nearest, heading=heading)

    # Centerline sampling
    def centerline_point(self, s) -> tuple[DoubleArray, DoubleArray]:
        """Centerline positions (N, 2) and tangent headings (N,) at stations s."""
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), self.length)
        if self.clockwise:
            s_ccw = np.mod(self.length - s, self.length)
        else:
            s_ccw = s
        a, r = self.a, self.radius
        _, s2, s3, s4 = self._s_offsets

        x = np.empty_like(s_ccw)
        y = np.empty_like(s_ccw)
        h = np.empty_like(s_ccw)

        m0 = s_ccw < s2
        x[m0], y[m0], h[m0] = s_ccw[m0] - a, -r, 0.0

        m1 = (s_ccw >= s2) & (s_ccw < s3)
        phi = (s_ccw[m1] - s2) / r - math.pi / 2
        x[m1], y[m1], h[m1] = a + r * np.cos(phi), r * np.sin(phi), phi + math.pi / 2

        m2 = (s_ccw >= s3) & (s_ccw < s4)
        x[m2], y[m2], h[m2] = a - (s_ccw[m2] - s3), r, math.pi

        m3 = s_ccw >= s4
        psi = (s_ccw[m3] - s4) / r + math.pi / 2
        x[m3], y[m3], h[m3] = -a + r * np.cos(psi), r * np.sin(psi), psi + math.pi / 2

        if self.clockwise:
            h = h + math.pi
        return np.stack([x, y], axis=1), wrap_angle(h)

    # Boundary ray casting
    def cast_rays(self, origin, angles, max_range: float) -> DoubleArray:
        """Distance from origin to the first track boundary along each world-frame angle.

        Both boundaries (inner and outer) count; misses and far hits clamp to max_range.
        """
        px, py = float(origin[0]), float(origin[1])
        angles = np.asarray(angles, dtype=float)
        dx, dy = np.cos(angles), np.sin(angles)
        a, r, w = self.a, self.radius, self.half_width
        best = np.full(angles.shape, np.inf)

        # Straight boundaries: horizontal lines for |x| <= a
        with np.errstate(divide="ignore", invalid="ignore"):
            for c in (-(r + w), -(r - w), r - w, r + w):
                t = (c - py) / dy
                hit_x = px + t * dx
                valid = np.isfinite(t) & (t > RAY_EPSILON) & (np.abs(hit_x) <= a + 1e-12)
                best = np.where(valid & (t < best), t, best)

        # Arc boundaries: circles around the two turn centres, restricted to their half plane
        for cx, outward in ((a, 1.0), (-a, -1.0)):
            ox, oy = px - cx, py
            b = dx * ox + dy * oy
            for radius in (r - w, r + w):
                cc = ox * ox + oy * oy - radius * radius
                disc = b * b - cc
                root = np.sqrt(np.maximum(disc, 0.0))
                for t in (-b - root, -b + root):
                    hit_x = px + t * dx
                    valid = (disc >= 0) & (t > RAY_EPSILON) & (outward * (hit_x - cx) >= -1e-12)
                    best = np.where(valid & (t < best), t, best)

        return np.clip(best, 0.0, max_range)


@lru_cache(maxsize=32)
def get_track(spec: TrackSpec) -> Track:
    """Cached Track for a (frozen, hashable) TrackSpec."""
    return Track(spec)


def project_to_centerline(point, track: TrackSpec) -> CenterlineFrame:
    """Nearest centerline point, station, tangent heading and signed lateral offset."""
    proj = get_track(track).project(np.asarray(point, dtype=float).reshape(1, 2))
    return CenterlineFrame(
        s=float(proj.s[0]),
        lateral_offset=float(proj.lateral_offset[0]),
        nearest_point=(float(proj.nearest[0, 0]), float(proj.nearest[0, 1])),
        tangent_heading=float(proj.heading[0]),
    )


def lateral_offset(point, track: TrackSpec) -> float:
    return float(get_track(track).project(np.asarray(point, dtype=float).reshape(1, 2)).lateral_offset[0])


def is_crashed(state, track: TrackSpec) -> bool:
    """True iff the vehicle is strictly outside the track (|offset| > half_width)."""
    state = np.asarray(state, dtype=float)
    return abs(lateral_offset(state[:2], track)) > track.half_width
