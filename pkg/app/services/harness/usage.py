"""Learner usage: how often each learner's control was executed, per lap or per protocol phase."""
import logging
from typing import Literal

from app.schemas import LapUsage, RunLog
from app.utils.io import read_events

logger = logging.getLogger(__name__)


def decision_records(log: RunLog) -> list[dict]:
    return [e for e in read_events(log.events_jsonl) if e.get("type") == "decision"]


def usage_table(log: RunLog, by: Literal["lap", "phase"] = "lap") -> list[LapUsage]:
    """Selection fraction of every learner within each group; fractions of a group sum to 1.

    Laps are listed from 0 to the last lap seen; a lap without decisions is skipped with a
    warning. Phases appear in order of first occurrence.
    """
    counts: dict[str, dict[str, int]] = {}
    for record in decision_records(log):
        group = str(record[by])
        row = counts.setdefault(group, {name: 0 for name in log.learners})
        row[record["selected"]] += 1

    if by == "lap":
        last = max((int(g) for g in counts), default=-1)
        for lap in range(last + 1):
            if str(lap) not in counts:
                logger.warning("lap %d has no logged decisions; left out of the usage table", lap)
        order = sorted(counts, key=int)
    else:
        order = list(counts)

    table = []
    for group in order:
        row = counts[group]
        steps = sum(row.values())
        table.append(LapUsage(group=group, steps=steps, fractions={k: v / steps for k, v in row.items()}))
    return table


def usage_rows(table: list[LapUsage], learners: list[str]) -> list[list]:
    """CSV rows: group, steps, then one percentage column per learner."""
    return [
        [u.group, u.steps, *(round(100.0 * u.fractions.get(name, 0.0), 3) for name in learners)]
        for u in table
    ]
