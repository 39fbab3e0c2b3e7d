"""File formats: channel dataset CSV, trajectory CSV and JSONL event logs."""
import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from app.constants import CONTROL_FIELDS, TRAJECTORY_COLUMNS


def _fmt(value: float) -> str:
    return repr(float(value))


def jsonable(value: Any) -> Any:
    """Recursively convert numpy values to JSON types, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


# Channel datasets
def write_dataset(
    path: Path,
    channel: str,
    observations: np.ndarray,
    controls: np.ndarray,
    units: str,
    seed: int,
    config_hash: str,
) -> None:
    """Write one channel's (observation, expert control) rows with a metadata header."""
    observations = np.asarray(observations, dtype=float)
    controls = np.asarray(controls, dtype=float)
    dims = observations.shape[1]
    columns = [f"obs_{i}" for i in range(dims)] + list(CONTROL_FIELDS)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# channel: {channel}\n")
        f.write(f"# dims: {dims}\n")
        f.write(f"# units: {units}\n")
        f.write(f"# seed: {seed}\n")
        f.write(f"# config_hash: {config_hash}\n")
        f.write(f"# columns: {','.join(columns)}\n")
        for obs, ctrl in zip(observations, controls):
            f.write(",".join(_fmt(v) for v in (*obs, *ctrl)) + "\n")


def read_dataset(path: Path) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Read a channel dataset. Returns (metadata, observations (N, d), controls (N, 2))."""
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            rows.append([float(v) for v in line.split(",")])
    dims = int(meta.get("dims", 0))
    data = np.array(rows, dtype=float).reshape(len(rows), dims + len(CONTROL_FIELDS))
    return meta, data[:, :dims], data[:, dims:]


# Trajectory CSV
class TrajectoryWriter:
    """Streams trajectory rows to CSV, one row per simulation step."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._file = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(TRAJECTORY_COLUMNS)

    def write(self, step: int, t: float, state: Sequence[float], control: Sequence[float],
              lap: int, crashed: bool) -> None:
        p_x, p_y, theta, _psi, v_x, v_y, theta_dot = state
        self._writer.writerow([
            step, _fmt(t), _fmt(p_x), _fmt(p_y), _fmt(theta), _fmt(v_x), _fmt(v_y),
            _fmt(theta_dot), _fmt(control[0]), _fmt(control[1]), lap, int(crashed),
        ])

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trajectory(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# JSONL event log
class EventLog:
    """Append-only JSON-lines writer; one object per line."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._file = open(path, "w")

    def append(self, record: dict) -> None:
        self._file.write(json.dumps(jsonable(record), sort_keys=True, allow_nan=False) + "\n")

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_events(path: Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
