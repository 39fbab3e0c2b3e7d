"""End-to-end: expert data collection, training, and closed-loop evaluation (slow)."""
import numpy as np
import pytest

from app.config import load_experiment_config
from app.schemas import CollectionConfig
from app.services.harness import collect_dataset, load_networks, train_all
from app.services.world import lateral_offset
from app.utils.io import read_dataset, read_trajectory

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def quick_config():
    return load_experiment_config(
        None,
        [
            f"learners.{channel}.training.epochs=30"
            for channel in ("state", "left", "right")
        ],
    )


@pytest.fixture(scope="module")
def datasets(tmp_path_factory, quick_config):
    return collect_dataset(quick_config, 1, tmp_path_factory.mktemp("data"), seed=0)


def test_one_lap_of_data(datasets):
    """About 155 rows for one lap of the default track at 5 m/s and 20 Hz."""
    assert 140 <= datasets.rows <= 171
    for channel, dims in (("state", 7), ("left", 32), ("right", 32)):
        _, obs, controls = read_dataset(datasets.for_channel(channel))
        assert obs.shape == (datasets.rows, dims)
        assert np.all(np.abs(controls) <= 1.0)


def test_training_is_reproducible(tmp_path, quick_config, datasets):
    first = train_all(quick_config, datasets, tmp_path / "a", seed=0)
    second = train_all(quick_config, datasets, tmp_path / "b", seed=0)
    assert first.ok and second.ok
    for channel in ("state", "left", "right"):
        assert first.checkpoints[channel].read_bytes() == second.checkpoints[channel].read_bytes()

    networks = load_networks(tmp_path / "a")
    assert [n.spec.input_dim for n in networks] == [7, 32, 32]
    for network in networks:
        assert network.loss_history[-1] < network.loss_history[0]



def executed_controls(datasets):
    rows = read_trajectory(datasets.state.parent / "expert_trajectory.csv")
    return np.array([[float(r["steering"]), float(r["throttle"])] for r in rows])


def test_collection_explores_around_the_expert(datasets, quick_config):
    """The car executes noisy controls, the labels stay the expert's own."""
    _, obs, labels = read_dataset(datasets.state)
    executed = executed_controls(datasets)
    assert executed.shape == labels.shape
    assert np.max(np.abs(executed[:, 0] - labels[:, 0])) > 0.05

    offsets = np.array([abs(lateral_offset(p, quick_config.track)) for p in obs[:, :2]])
    assert offsets.max() > 0.1
    assert offsets.max() < quick_config.track.half_width


def test_noise_free_collection_executes_labels(tmp_path, quick_config):
    config = quick_config.model_copy(
        update={"collection": CollectionConfig(control_noise=(0.0, 0.0))}
    )
    datasets = collect_dataset(config, 1, tmp_path, seed=0)
    _, _, labels = read_dataset(datasets.state)
    assert np.array_equal(executed_controls(datasets), labels)


def test_collection_is_reproducible(tmp_path, quick_config, datasets):
    again = collect_dataset(quick_config, 1, tmp_path, seed=0)
    assert again.state.read_bytes() == datasets.state.read_bytes()
