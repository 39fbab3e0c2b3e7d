import json
import math
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest
from scipy.stats import spearmanr

from app.errors import ConfigError, NonFiniteError, TrainingDivergedError
from app.schemas import MLPSpec, TrainingConfig
from app.services.learners import TrainBatch, load_checkpoint, save_checkpoint, train
from app.services.learners.training import initial_params

TARGET_MEAN = np.array([0.3, -0.2])
TARGET_STD = 0.1


def constant_target_batch(rng, count=500, informative_inputs=False):
    """Targets scattered around a fixed mean, independent of the inputs."""
    if informative_inputs:
        inputs = rng.normal(size=(count, 3))
    else:
        inputs = np.ones((count, 3))
    targets = TARGET_MEAN + TARGET_STD * rng.normal(size=(count, 2))
    return TrainBatch(inputs=inputs, targets=targets)


@pytest.fixture
def small_spec():
    return MLPSpec(input_dim=3, hidden_widths=(8,), output_dim=2, dropout_rate=0.1)


def test_zero_epochs_returns_initialization(small_spec, rng):
    net = train(small_spec, constant_target_batch(rng, 50), TrainingConfig(epochs=0), seed=3)
    start = initial_params(small_spec, 3)
    assert net.loss_history == []
    for name, value in start.items():
        assert np.array_equal(net.params[name], value)


def test_constant_target_converges(small_spec, rng):
    """A constant predictor converges to the target mean and the log of the target spread."""
    batch = constant_target_batch(rng)
    training = TrainingConfig(epochs=2000, batch_size=len(batch), learning_rate=1e-2)
    net = train(small_spec, batch, training, seed=0)
    mean, s = net.predict(np.ones(3))
    np.testing.assert_allclose(mean, batch.targets.mean(axis=0), atol=1e-2)
    assert s == pytest.approx(math.log(2 * TARGET_STD**2), abs=0.2)


@pytest.mark.parametrize("seed", range(5))
def test_loss_non_increasing_at_small_learning_rate(seed):
    spec = MLPSpec(input_dim=3, hidden_widths=(8,), output_dim=2, dropout_rate=0.0)
    batch = constant_target_batch(np.random.default_rng(seed), 200, informative_inputs=True)
    training = TrainingConfig(epochs=200, batch_size=len(batch), learning_rate=1e-4)
    history = train(spec, batch, training, seed=seed).loss_history
    assert len(history) == 200
    assert np.all(np.diff(history) <= 1e-12)


def test_training_deterministic(small_spec, rng):
    batch = constant_target_batch(rng, 100, informative_inputs=True)
    training = TrainingConfig(epochs=5, batch_size=16)
    a = train(small_spec, batch, training, seed=11)
    b = train(small_spec, batch, training, seed=11)
    c = train(small_spec, batch, training, seed=12)
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])
    assert a.loss_history == b.loss_history
    assert not np.array_equal(a.params["W0"], c.params["W0"])


def test_batches_are_merged(small_spec, rng):
    first = constant_target_batch(rng, 30, informative_inputs=True)
    second = constant_target_batch(rng, 20, informative_inputs=True)
    net = train(small_spec, [first, second], TrainingConfig(epochs=1), seed=0)
    assert net.input_mean.shape == (3,)
    assert len(net.loss_history) == 1


def test_non_finite_forward_aborts(small_spec, rng):
    batch = constant_target_batch(rng, 20)
    with patch("app.services.learners.training.forward", side_effect=NonFiniteError("hidden layer 0")):
        with pytest.raises(TrainingDivergedError) as info:
            train(small_spec, batch, TrainingConfig(epochs=3), seed=0, channel="left")
    assert info.value.channel == "left"
    assert info.value.epoch == 1


def test_non_finite_loss_aborts(small_spec, rng):
    batch = constant_target_batch(rng, 20)
    bad = (float("nan"), np.zeros((20, 2)), np.zeros(20))
    with patch("app.services.learners.training.batch_loss_and_grad", return_value=bad):
        with pytest.raises(TrainingDivergedError):
            train(small_spec, batch, TrainingConfig(epochs=3, batch_size=64), seed=0)


def test_dataset_validation(small_spec):
    with pytest.raises(ValueError):
        TrainBatch(inputs=np.zeros((3, 3)), targets=np.zeros((2, 2)))
    with pytest.raises(NonFiniteError):
        TrainBatch(inputs=np.full((2, 3), np.nan), targets=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        train(small_spec, TrainBatch(inputs=np.zeros((4, 5)), targets=np.zeros((4, 2))), TrainingConfig(), seed=0)
    with pytest.raises(ValueError):
        train(small_spec, [], TrainingConfig(), seed=0)


def test_trained_network_checks_normalization(make_network):
    net = make_network(input_dim=7)
    with pytest.raises(ValueError):
        replace(net, input_mean=np.zeros(6))
    with pytest.raises(ValueError):
        replace(net, input_std=np.zeros(7))


def test_checkpoint_round_trip(tmp_path, small_spec, rng):
    net = train(small_spec, constant_target_batch(rng, 40, informative_inputs=True), TrainingConfig(epochs=2), seed=4, channel="right")
    path = save_checkpoint(net, tmp_path / "right.json")
    loaded = load_checkpoint(path)
    assert loaded.channel == "right"
    assert loaded.spec == net.spec
    assert loaded.seed == 4
    assert loaded.loss_history == net.loss_history
    for name in net.params:
        assert np.array_equal(loaded.params[name], net.params[name])
    x = rng.normal(size=3)
    assert np.array_equal(loaded.predict(x)[0], net.predict(x)[0])


def test_checkpoint_errors(tmp_path, make_network):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.json")
    path = save_checkpoint(make_network(), tmp_path / "state.json")
    payload = json.loads(path.read_text())
    payload["schema_version"] = 99
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        load_checkpoint(path)


@pytest.mark.slow
def test_learned_variance_tracks_noise_level():
    """On y = sin(x) + sigma(x) noise, exp(s) ranks the input bins like sigma(x)^2."""
    rng = np.random.default_rng(0)
    x = rng.uniform(-3.0, 3.0, size=(3000, 1))
    sigma = 0.05 + 0.3 * (x[:, 0] + 3.0) / 6.0
    y = np.sin(x) + sigma[:, None] * rng.normal(size=(3000, 2))
    spec = MLPSpec(input_dim=1, hidden_widths=(32, 32), output_dim=2, dropout_rate=0.05)
    training = TrainingConfig(epochs=300, batch_size=64, learning_rate=3e-3)
    net = train(spec, TrainBatch(inputs=x, targets=y), training, seed=0)

    centers = np.linspace(-2.7, 2.7, 10)
    learned = [math.exp(net.predict([c])[1]) for c in centers]
    true = (0.05 + 0.3 * (centers + 3.0) / 6.0) ** 2
    assert spearmanr(learned, true).correlation > 0.8
