import numpy as np
import pytest

from app.errors import NonFiniteError
from app.schemas import MLPSpec
from app.services.learners import (
    backward,
    batch_loss_and_grad,
    concrete_dropout_forward,
    concrete_regularizer,
    deterministic_forward,
    forward,
    forward_dropout,
    init_params,
)
from app.services.learners.network import check_params, concrete_regularizer_grad, param_count


@pytest.fixture
def spec():
    return MLPSpec(input_dim=3, hidden_widths=(5, 4), output_dim=2, dropout_rate=0.3)


@pytest.fixture
def concrete_spec():
    return MLPSpec(
        input_dim=3,
        hidden_widths=(5, 4),
        output_dim=2,
        dropout_rate=0.2,
        dropout_mode="concrete",
        temperature=0.5,
        weight_regularizer=1e-2,
        dropout_regularizer=1e-2,
    )


@pytest.fixture
def batch(rng):
    return rng.normal(size=(6, 3)), rng.uniform(-1, 1, size=(6, 2))


def masked_loss(params, spec, x, y, noise):
    record = forward(params, spec, x, noise=noise)
    loss, _, _ = batch_loss_and_grad(record.mean, record.log_var, y)
    return loss


def check_gradients(params, spec, x, y, noise, names, rng, count=100, rtol=1e-4, h=1e-6):
    """Compare backward() against central differences on randomly chosen entries."""
    record = forward(params, spec, x, noise=noise)
    _, grad_mean, grad_s = batch_loss_and_grad(record.mean, record.log_var, y)
    grads = backward(params, spec, record, grad_mean, grad_s)
    for _ in range(count):
        name = names[rng.integers(len(names))]
        idx = tuple(rng.integers(n) for n in params[name].shape)
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += h
        minus[name][idx] -= h
        numeric = (masked_loss(plus, spec, x, y, noise) - masked_loss(minus, spec, x, y, noise)) / (2 * h)
        analytic = grads[name][idx]
        assert abs(numeric - analytic) <= rtol * max(abs(numeric), abs(analytic)) + 1e-7, (name, idx)


def test_init_shapes(spec, rng):
    params = init_params(spec, rng)
    assert params["W0"].shape == (3, 5)
    assert params["W1"].shape == (5, 4)
    assert params["W2"].shape == (4, 3)  # two means and the s head
    assert all(np.all(params[f"b{l}"] == 0) for l in range(3))
    assert param_count(params) == 3 * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3
    check_params(params, spec)


def test_check_params_rejects_nan(spec, rng):
    params = init_params(spec, rng)
    params["b1"][0] = np.nan
    with pytest.raises(NonFiniteError):
        check_params(params, spec)


def test_zero_rate_matches_deterministic(rng):
    """With p = 0 the sampling pass is the deterministic pass and draws nothing."""
    spec = MLPSpec(input_dim=3, hidden_widths=(5, 4), dropout_rate=0.0)
    params = init_params(spec, rng)
    x = np.array([0.3, -1.2, 0.7])
    stream = np.random.default_rng(1)
    mean, s = forward_dropout(params, spec, x, stream)
    ref_mean, ref_s = deterministic_forward(params, spec, x)
    assert np.array_equal(mean, ref_mean)
    assert s == ref_s
    assert stream.random() == np.random.default_rng(1).random()


def test_same_stream_same_output(spec, rng):
    params = init_params(spec, rng)
    x = np.array([0.3, -1.2, 0.7])
    a = forward_dropout(params, spec, x, np.random.default_rng(9))
    b = forward_dropout(params, spec, x, np.random.default_rng(9))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_zero_weights_output_is_bias(rng):
    """Masks act on activations only; with zero weights the output is the last bias."""
    spec = MLPSpec(input_dim=3, hidden_widths=(5, 4), dropout_rate=0.5)
    params = init_params(spec, rng)
    for l in range(3):
        params[f"W{l}"] = np.zeros_like(params[f"W{l}"])
        params[f"b{l}"] = rng.normal(size=params[f"b{l}"].shape)
    for _ in range(20):
        mean, s = forward_dropout(params, spec, rng.normal(size=3), rng)
        np.testing.assert_array_equal(mean, params["b2"][:2])
        assert s == params["b2"][2]


def test_wrong_input_width(spec, rng):
    with pytest.raises(ValueError):
        forward(init_params(spec, rng), spec, np.zeros((2, 4)), rng=rng)


def test_gradients_fixed_masks(spec, rng, batch):
    x, y = batch
    params = init_params(spec, rng)
    params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()}
    noise = [rng.random((6, 5)) < 0.7, rng.random((6, 4)) < 0.7]
    check_gradients(params, spec, x, y, noise, ["W0", "b0", "W1", "b1", "W2", "b2"], rng)


def test_zero_loss_gradient(spec, rng, batch):
    x, _ = batch
    params = init_params(spec, rng)
    record = forward(params, spec, x, rng=rng)
    grads = backward(params, spec, record, np.zeros((6, 2)), np.zeros(6))
    assert all(np.all(g == 0) for g in grads.values())


def test_backward_shape_mismatch(spec, rng, batch):
    x, _ = batch
    params = init_params(spec, rng)
    record = forward(params, spec, x, rng=rng)
    with pytest.raises(ValueError):
        backward(params, spec, record, np.zeros((5, 2)), np.zeros(5))


def test_dropped_unit_gets_no_gradient(spec, rng, batch):
    """Weights into and out of a unit dropped in every row receive zero gradient."""
    x, y = batch
    params = init_params(spec, rng)
    keep0 = np.ones((6, 5), dtype=bool)
    keep0[:, 2] = False
    noise = [keep0, np.ones((6, 4), dtype=bool)]
    record = forward(params, spec, x, noise=noise)
    _, grad_mean, grad_s = batch_loss_and_grad(record.mean, record.log_var, y)
    grads = backward(params, spec, record, grad_mean, grad_s)
    np.testing.assert_array_equal(grads["W0"][:, 2], 0.0)
    np.testing.assert_array_equal(grads["b0"][2], 0.0)
    np.testing.assert_array_equal(grads["W1"][2, :], 0.0)


def test_concrete_gradients_fixed_noise(concrete_spec, rng, batch):
    """Backward through the relaxed masks, dropout logits included, matches finite differences."""
    x, y = batch
    params = init_params(concrete_spec, rng)
    params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()}
    noise = [rng.random((6, 5)), rng.random((6, 4))]
    check_gradients(
        params, concrete_spec, x, y, noise,
        ["W0", "W1", "W2", "b2", "p_logit0", "p_logit1"], rng, count=60, rtol=1e-3,
    )


def test_concrete_regularizer_gradient(concrete_spec, rng):
    params = init_params(concrete_spec, rng)
    grads = concrete_regularizer_grad(params, concrete_spec)
    h = 1e-6
    for name in ("W1", "b1", "W2", "p_logit0", "p_logit1"):
        idx = (0,) * params[name].ndim
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += h
        minus[name][idx] -= h
        numeric = (concrete_regularizer(plus, concrete_spec) - concrete_regularizer(minus, concrete_spec)) / (2 * h)
        assert grads[name][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


def test_concrete_regularizer_zero_in_fixed_mode(spec, rng):
    params = init_params(spec, rng)
    assert concrete_regularizer(params, spec) == 0.0
    assert concrete_regularizer_grad(params, spec) == {}


def test_concrete_masks_binary_at_low_temperature(concrete_spec, rng):
    spec = concrete_spec.model_copy(update={"temperature": 0.01})
    params = init_params(spec, rng)
    record = forward(params, spec, rng.normal(size=(200, 3)), rng=rng)
    drops = np.concatenate([d.ravel() for d in record.drop])
    assert np.mean(np.minimum(drops, 1.0 - drops)) < 0.01


def test_concrete_keeps_everything_at_very_negative_logit(concrete_spec, rng):
    params = init_params(concrete_spec, rng)
    params["p_logit0"] = np.array([-20.0])
    params["p_logit1"] = np.array([-20.0])
    record = forward(params, concrete_spec, rng.normal(size=(50, 3)), rng=rng)
    for drop in record.drop:
        assert np.all(drop < 1e-6)


def test_concrete_forward_returns_regularizer(concrete_spec, rng):
    params = init_params(concrete_spec, rng)
    mean, s, reg = concrete_dropout_forward(params, concrete_spec, np.zeros(3), 0.1, rng)
    assert mean.shape == (2,)
    assert np.isfinite(s)
    assert reg == pytest.approx(concrete_regularizer(params, concrete_spec))


def test_concrete_rejects_bad_temperature(concrete_spec, spec, rng):
    params = init_params(concrete_spec, rng)
    with pytest.raises(ValueError):
        concrete_dropout_forward(params, concrete_spec, np.zeros(3), 0.0, rng)
    with pytest.raises(ValueError):
        concrete_dropout_forward(params, concrete_spec, np.zeros(3), -1.0, rng)
    with pytest.raises(ValueError):
        concrete_dropout_forward(init_params(spec, rng), spec, np.zeros(3), 0.1, rng)


def test_non_finite_activation_named(spec, rng):
    params = init_params(spec, rng)
    params["W0"][0, 0] = 1e308
    with pytest.raises(NonFiniteError, match="layer"):
        forward(params, spec, np.full((1, 3), 1e10), rng=rng)
