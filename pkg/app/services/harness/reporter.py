"""Run report: colored trajectory segments, usage tables, variance summary, HTML + figure."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from jinja2 import Environment, FileSystemLoader, select_autoescape  # noqa: E402

from app.constants import TRAJECTORY_COLUMNS  # noqa: E402
from app.schemas import RunLog, TrackSpec  # noqa: E402
from app.services.harness.usage import decision_records, usage_rows, usage_table  # noqa: E402
from app.services.world import get_track  # noqa: E402
from app.utils.io import jsonable, read_trajectory, write_csv  # noqa: E402

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parents[2] / "templates"
LEARNER_COLORS = {"state": "tab:blue", "left": "tab:orange", "right": "tab:green", "expert": "black"}
QUANTILES = (0.1, 0.5, 0.9)


@dataclass(frozen=True)
class ReportBundle:
    segments_csv: Path
    usage_by_lap_csv: Path
    usage_by_phase_csv: Path
    summary_json: Path
    figure_png: Path
    report_html: Path


def trajectory_segments(log: RunLog) -> list[tuple[int, str, dict[str, str]]]:
    """Tag every trajectory row with (segment id, executing learner).

    A new segment starts whenever the lap or the selected learner changes.
    """
    selected = {int(r["step"]): r["selected"] for r in decision_records(log)} if log.learners else {}
    tagged = []
    segment, previous = -1, None
    for row in read_trajectory(log.trajectory_csv):
        learner = selected.get(int(row["step"]), log.mode)
        key = (row["lap"], learner)
        if key != previous:
            segment += 1
            previous = key
        tagged.append((segment, learner, row))
    return tagged


def _quantiles(values: list[float]) -> dict | None:
    if not values:
        return None
    q = np.quantile(np.asarray(values), QUANTILES)
    return {f"q{int(p * 100)}": float(v) for p, v in zip(QUANTILES, q)}


def variance_summary(log: RunLog) -> dict[str, dict]:
    """Per-learner total-variance quantiles on clean steps, inside its own fault windows, and
    on steps where its fault gate was open, plus the window/clean median ratio."""
    groups = {name: {"clean": [], "window": [], "active": []} for name in log.learners}
    for record in decision_records(log):
        window_channels = set() if record["phase"] == "clean" else set(record["phase"].split("+"))
        for name, report in record["learners"].items():
            total = report["total"]
            if total is None:
                continue
            if record["phase"] == "clean":
                groups[name]["clean"].append(total)
            if name in window_channels:
                groups[name]["window"].append(total)
            if name in record["faulted"]:
                groups[name]["active"].append(total)

    summary = {}
    for name, values in groups.items():
        entry = {key: _quantiles(v) for key, v in values.items()}
        clean, window = entry["clean"], entry["window"]
        entry["window_to_clean_median"] = (
            window["q50"] / clean["q50"] if clean and window and clean["q50"] > 0 else None
        )
        summary[name] = entry
    return summary


def _plot(tagged, track: TrackSpec | None, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 5))
    if track is not None:
        geometry = get_track(track)
        points, heading = geometry.centerline_point(np.linspace(0.0, geometry.length, 400))
        normal = np.stack([-np.sin(heading), np.cos(heading)], axis=1)
        for side in (-1.0, 1.0):
            edge = points + side * track.half_width * normal
            ax.plot(edge[:, 0], edge[:, 1], color="0.6", linewidth=1)

    by_segment: dict[int, tuple[str, list]] = {}
    for segment, learner, row in tagged:
        by_segment.setdefault(segment, (learner, []))[1].append((float(row["p_x"]), float(row["p_y"])))
    seen = set()
    for learner, pts in by_segment.values():
        xy = np.array(pts)
        label = None if learner in seen else learner
        seen.add(learner)
        ax.plot(xy[:, 0], xy[:, 1], color=LEARNER_COLORS.get(learner, "tab:red"), linewidth=1.2, label=label)

    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if seen:
        ax.legend(loc="upper right", fontsize="small")
    fig.savefig(path, dpi=120, bbox_inches="tight", pad_inches=0.1)
    plt.close(fig)


def emit_report(log: RunLog, out_dir: Path | None = None, track: TrackSpec | None = None) -> ReportBundle:
    """Write the report files for one run (into its run directory unless told otherwise)."""
    out_dir = out_dir or log.run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)

    tagged = trajectory_segments(log)
    segments_csv = out_dir / "segments.csv"
    write_csv(
        segments_csv,
        ["segment", "learner", *TRAJECTORY_COLUMNS],
        ([segment, learner, *(row[c] for c in TRAJECTORY_COLUMNS)] for segment, learner, row in tagged),
    )

    by_lap = usage_table(log, by="lap") if log.learners else []
    by_phase = usage_table(log, by="phase") if log.learners else []
    header = ["group", "steps", *log.learners]
    usage_by_lap_csv = out_dir / "usage_by_lap.csv"
    usage_by_phase_csv = out_dir / "usage_by_phase.csv"
    write_csv(usage_by_lap_csv, header, usage_rows(by_lap, log.learners))
    write_csv(usage_by_phase_csv, header, usage_rows(by_phase, log.learners))

    summary = {
        "mode": log.mode,
        "seed": log.seed,
        "steps": log.steps,
        "laps_completed": log.laps_completed,
        "crashed": log.crashed,
        "crash_step": log.crash_step,
        "end_reason": log.end_reason,
        "segments": (tagged[-1][0] + 1) if tagged else 0,
        "usage_by_phase": {u.group: u.fractions for u in by_phase},
        "variance": variance_summary(log) if log.learners else {},
    }
    summary_json = out_dir / "summary.json"
    summary_json.write_text(json.dumps(jsonable(summary), indent=2, sort_keys=True))

    figure_png = out_dir / "trajectory.png"
    _plot(tagged, track, figure_png)

    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=select_autoescape(["html"]))
    report_html = out_dir / "report.html"
    report_html.write_text(
        env.get_template("report.html").render(
            summary=summary,
            learners=log.learners,
            usage_by_lap=usage_rows(by_lap, log.learners),
            usage_by_phase=usage_rows(by_phase, log.learners),
            figure=figure_png.name,
        )
    )
    logger.info("report written to %s", out_dir)
    return ReportBundle(
        segments_csv=segments_csv,
        usage_by_lap_csv=usage_by_lap_csv,
        usage_by_phase_csv=usage_by_phase_csv,
        summary_json=summary_json,
        figure_png=figure_png,
        report_html=report_html,
    )
