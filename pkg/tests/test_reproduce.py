"""The reproduction script's async orchestration, with collection, training and driving stubbed."""
import argparse
import importlib.util
import json
from pathlib import Path
from types import SimpleNamespace
from unittest.mock import patch

import pytest

from app.constants import CHANNELS, EXIT_DIVERGED
from app.errors import TrainingDivergedError
from app.schemas import DatasetPaths, ExperimentConfig
from app.services.harness import train_all_async

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "reproduce.py"


@pytest.fixture(scope="module")
def reproduce():
    spec = importlib.util.spec_from_file_location("reproduce_script", SCRIPT)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def fake_datasets(config, laps, out_dir, seed):
    return DatasetPaths(**{c: out_dir / f"{c}.csv" for c in CHANNELS}, rows=10)


def fake_train_channel(config, channel, dataset, out_dir, seed):
    return out_dir / f"{channel}.json"


def fake_single(config, network, schedule, run_dir, seed, lap_budget=None):
    return SimpleNamespace(learners=[network.channel], crashed=False, laps_completed=lap_budget, seed=seed)


def fake_ensemble(config, networks, schedule, run_dir, seed):
    return SimpleNamespace(learners=list(CHANNELS), crashed=False, laps_completed=17, seed=seed)


async def test_train_all_async_inside_running_loop(tmp_path):
    datasets = fake_datasets(None, 1, tmp_path, 0)
    with patch("app.services.harness.trainer.train_channel", side_effect=fake_train_channel) as train:
        outcome = await train_all_async(ExperimentConfig(), datasets, tmp_path, seed=0)
    assert outcome.ok
    assert set(outcome.checkpoints) == set(CHANNELS)
    assert train.call_count == 3


async def test_main_trains_and_drives_every_master_seed(tmp_path, reproduce):
    args = argparse.Namespace(
        seed=7, config=None, set=[], out=tmp_path, skip_collect=False, master_seeds=3, fragility_runs=2,
    )
    networks = [SimpleNamespace(channel=c) for c in CHANNELS]
    passed = {"w:c": {"passed": True}}
    with (
        patch.object(reproduce, "expert_check", return_value={"passed": True}),
        patch.object(reproduce, "collect_dataset", side_effect=fake_datasets) as collect,
        patch("app.services.harness.trainer.train_channel", side_effect=fake_train_channel),
        patch.object(reproduce, "load_networks", return_value=networks),
        patch.object(reproduce, "run_single_learner", side_effect=fake_single),
        patch.object(reproduce, "run_ensemble", side_effect=fake_ensemble),
        patch.object(reproduce, "crashed_after_fault", return_value=True),
        patch.object(reproduce, "emit_report"),
        patch.object(reproduce, "usage_shift", return_value=passed),
        patch.object(reproduce, "variance_response", return_value=passed),
    ):
        assert await reproduce.main(args) == 0

    assert sorted(call.args[3] for call in collect.call_args_list) == [7, 8, 9]
    acceptance = json.loads((tmp_path / "acceptance.json").read_text())
    assert acceptance["master_seeds"] == [7, 8, 9]
    assert acceptance["single_clean"] == {c: 3 for c in CHANNELS}
    assert acceptance["single_fault_crashes"] == {c: 2 for c in CHANNELS}
    assert sorted(acceptance["ensemble"]) == ["7", "8", "9"]
    assert all(run["usage_passed"] and run["variance_passed"] for run in acceptance["ensemble"].values())


async def test_main_stops_on_divergence(tmp_path, reproduce):
    def diverge(config, channel, dataset, out_dir, seed):
        raise TrainingDivergedError(channel, 3)

    args = argparse.Namespace(
        seed=0, config=None, set=[], out=tmp_path, skip_collect=False, master_seeds=1, fragility_runs=1,
    )
    with (
        patch.object(reproduce, "expert_check", return_value={"passed": True}),
        patch.object(reproduce, "collect_dataset", side_effect=fake_datasets),
        patch("app.services.harness.trainer.train_channel", side_effect=diverge),
    ):
        assert await reproduce.main(args) == EXIT_DIVERGED
    assert not (tmp_path / "acceptance.json").exists()
