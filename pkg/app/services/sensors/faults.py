"""Fault schedules: when each channel's observations are corrupted."""
import logging

import numpy as np

from app.constants import CHANNELS
from app.schemas import CostConfig, FaultSchedule, FaultWindow, ProtocolConfig, TrackSpec

logger = logging.getLogger(__name__)


def window_active(window: FaultWindow, t: float, rng: np.random.Generator | None = None) -> bool:
    """Whether a single window corrupts the channel at time t."""
    if not (window.start <= t < window.end):
        return False
    if window.duty_cycle >= 1.0:
        return True
    if window.gating == "random":
        if rng is None:
            raise ValueError("random gating needs a random stream")
        return bool(rng.random() < window.duty_cycle)
    phase = (t - window.start) % window.burst_period
    return phase < window.duty_cycle * window.burst_period


def fault_active(
    schedule: FaultSchedule, channel: str, t: float, rng: np.random.Generator | None = None
) -> bool:
    """True iff t is inside one of the channel's windows and its intermittency gate is open.

    Phase gating is deterministic: the gate is open for the first duty_cycle fraction of
    every burst_period, measured from the window start.
    """
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return any(window_active(w, t, rng) for w in schedule.for_channel(channel))


def active_window(schedule: FaultSchedule, channel: str, t: float) -> FaultWindow | None:
    """The window whose interval contains t (ignoring the gate), if any."""
    for window in schedule.for_channel(channel):
        if window.start <= t < window.end:
            return window
    return None


def phase_label(schedule: FaultSchedule, t: float) -> str:
    """Protocol phase at time t: 'clean' or the '+'-joined faulted channels."""
    faulted = [c for c in CHANNELS if active_window(schedule, c, t) is not None]
    if not faulted:
        return "clean"
    labels = {active_window(schedule, c, t).label for c in faulted}
    labels.discard(None)
    return labels.pop() if len(labels) == 1 else "+".join(faulted)


def estimated_lap_time(track: TrackSpec, cost: CostConfig) -> float:
    return track.length / cost.v_x_des


def build_protocol_schedule(
    protocol: ProtocolConfig, track: TrackSpec, cost: CostConfig
) -> FaultSchedule:
    """Turn the lap-structured robustness protocol into time windows.

    Clean prefix, then one window per entry of protocol.sequence, windows separated by
    clean gaps. Laps convert to seconds through the lap-time estimate L / V_x_des.
    """
    lap_time = estimated_lap_time(track, cost)
    windows: list[FaultWindow] = []
    lap = protocol.clean_laps
    for channels in protocol.sequence:
        start, end = lap * lap_time, (lap + protocol.window_laps) * lap_time
        label = "+".join(channels)
        for channel in channels:
            windows.append(
                FaultWindow(
                    channel=channel,
                    start=start,
                    end=end,
                    duty_cycle=protocol.duty_cycle,
                    burst_period=protocol.burst_period,
                    label=label,
                )
            )
        lap += protocol.window_laps + protocol.gap_laps
    if lap - protocol.gap_laps > protocol.total_laps:
        logger.warning(
            "protocol windows extend to lap %d, beyond total_laps=%d",
            lap - protocol.gap_laps, protocol.total_laps,
        )
    return FaultSchedule(windows=tuple(windows))


def single_channel_schedule(
    channel: str,
    track: TrackSpec,
    cost: CostConfig,
    clean_laps: int = 4,
    fault_laps: float = 1e6,
    duty_cycle: float = 0.7,
    burst_period: float = 1.0,
) -> FaultSchedule:
    """Fault one channel after a clean prefix (the single-learner fragility test)."""
    lap_time = estimated_lap_time(track, cost)
    start = clean_laps * lap_time
    return FaultSchedule(
        windows=(
            FaultWindow(
                channel=channel,
                start=start,
                end=start + fault_laps * lap_time,
                duty_cycle=duty_cycle,
                burst_period=burst_period,
                label=channel,
            ),
        )
    )
