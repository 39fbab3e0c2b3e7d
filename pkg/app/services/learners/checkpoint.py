"""Versioned JSON checkpoints of trained learners."""
import json
from pathlib import Path

import numpy as np

from app.constants import CHECKPOINT_SCHEMA_VERSION
from app.errors import ConfigError
from app.schemas import MLPSpec
from app.services.learners.model import TrainedNetwork
from app.services.learners.network import check_params


def save_checkpoint(network: TrainedNetwork, path: Path) -> Path:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "channel": network.channel,
        "spec": network.spec.model_dump(mode="json"),
        "input_mean": network.input_mean.tolist(),
        "input_std": network.input_std.tolist(),
        "seed": network.seed,
        "loss_history": [float(v) for v in network.loss_history],
        "params": {
            name: {"shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in network.params.items()
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, allow_nan=False))
    return path


def load_checkpoint(path: Path) -> TrainedNetwork:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ConfigError(f"unsupported checkpoint schema version in {path}")

    spec = MLPSpec.model_validate(payload["spec"])
    params = {
        name: np.array(entry["values"], dtype=float).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    check_params(params, spec)
    return TrainedNetwork(
        channel=payload["channel"],
        spec=spec,
        params=params,
        input_mean=np.array(payload["input_mean"], dtype=float),
        input_std=np.array(payload["input_std"], dtype=float),
        seed=int(payload["seed"]),
        loss_history=list(payload["loss_history"]),
    )
