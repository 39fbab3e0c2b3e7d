from app.schemas import TrackSpec


def update_lap_count(prev_s: float, new_s: float, track: TrackSpec, laps: int) -> int:
    """Count a lap when the station wraps through s = 0 in the driving direction.

    A wrap is a decrease of the station whose forward distance (new - prev mod L) is under
    half a track; a backward step across s = 0 is jitter and never counts.
    """
    length = track.length
    forward = (new_s - prev_s) % length
    if new_s < prev_s and forward < length / 2.0:
        return laps + 1
    return laps


class LapCounter:
    """Lap counting with half-track hysteresis.

    A wrap only counts once the vehicle has driven forward through the half-track station
    since the last counted lap, so jitter around s = 0 cannot count twice.
    """

    def __init__(self, track: TrackSpec, start_s: float = 0.0):
        self.track = track
        self.half = track.length / 2.0
        self.laps = 0
        self.prev_s = start_s
        self.armed = False

    def update(self, new_s: float) -> bool:
        """Feed the next station; returns True when a lap was completed."""
        prev_s, completed = self.prev_s, False
        if self.armed and update_lap_count(prev_s, new_s, self.track, self.laps) > self.laps:
            self.laps += 1
            self.armed = False
            completed = True
        elif prev_s < self.half <= new_s and new_s - prev_s < self.half:
            self.armed = True
        self.prev_s = new_s
        return completed
