"""Pass/fail checks on finished runs: fault fragility, usage shift and variance response."""
import bisect
import logging

import numpy as np

from app.schemas import RunLog
from app.services.harness.usage import decision_records, usage_table
from app.utils.io import read_events

logger = logging.getLogger(__name__)

STATE_WINDOW_DROP = 2.0


def fault_onset_step(log: RunLog) -> int | None:
    """Step at which the first fault gate opened, or None for a run that never saw a fault."""
    for event in read_events(log.events_jsonl):
        if event.get("type") == "fault" and event.get("active"):
            return int(event["step"])
    return None


def crashed_after_fault(log: RunLog, within_laps: int = 2) -> bool:
    """True when the run crashed after its first fault opened and within ``within_laps`` laps of it.

    A crash before any fault, or one that took longer than the allowance, does not count.
    """
    if not log.crashed or log.crash_step is None:
        return False
    onset = fault_onset_step(log)
    if onset is None or log.crash_step < onset:
        return False
    laps_at_onset = bisect.bisect_right(log.lap_boundaries, onset)
    return log.laps_completed - laps_at_onset < within_laps


def usage_shift(log: RunLog) -> dict[str, dict]:
    """Selection fraction of each window's faulted channels against their clean-lap fraction.

    Keys are ``"<window>:<channel>"``. ``dropped`` is a strict decrease; the state window
    must also fall to at most half its clean fraction.
    """
    by_phase = {u.group: u.fractions for u in usage_table(log, by="phase")}
    clean = by_phase.get("clean", {})
    shifts = {}
    for phase, fractions in by_phase.items():
        if phase == "clean":
            continue
        for channel in phase.split("+"):
            before, during = clean.get(channel), fractions.get(channel, 0.0)
            entry = {
                "clean": before,
                "window": during,
                "dropped": before is not None and during < before,
            }
            if phase == "state":
                entry["halved"] = before is not None and during * STATE_WINDOW_DROP <= before
            entry["passed"] = entry["dropped"] and entry.get("halved", True)
            shifts[f"{phase}:{channel}"] = entry
    return shifts


def variance_response(log: RunLog) -> dict[str, dict]:
    """Median total variance of each faulted channel inside its window against its clean median."""
    totals: dict[str, dict[str, list[float]]] = {}
    for record in decision_records(log):
        for name, report in record["learners"].items():
            if report["total"] is not None:
                totals.setdefault(record["phase"], {}).setdefault(name, []).append(report["total"])

    clean = {name: float(np.median(v)) for name, v in totals.get("clean", {}).items()}
    response = {}
    for phase, by_learner in totals.items():
        if phase == "clean":
            continue
        for channel in phase.split("+"):
            if channel not in by_learner or channel not in clean:
                logger.warning("[%s] no variance samples for %s; skipped", phase, channel)
                continue
            window = float(np.median(by_learner[channel]))
            response[f"{phase}:{channel}"] = {
                "clean_median": clean[channel],
                "window_median": window,
                "ratio": window / clean[channel] if clean[channel] > 0 else None,
                "passed": window > clean[channel],
            }
    return response
