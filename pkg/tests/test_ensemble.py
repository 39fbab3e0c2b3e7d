import json

import numpy as np
import pytest

from app.errors import NoValidLearnerError
from app.services.ensemble import (
    PredictiveSamples,
    UncertaintyReport,
    decide,
    decompose,
    decompose_many,
    ensemble_step,
    ensemble_step_async,
    inverse_variance_blend,
    mc_sample,
    min_variance_select,
)
from app.services.learners import forward_dropout


def samples(means, variances):
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    return PredictiveSamples(means=means, aleatoric_vars=np.asarray(variances, dtype=float))


def report(mean, total):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return UncertaintyReport(mean=mean, epistemic=0.0, aleatoric=total, total=total)


def confident(make_network, channel="state", input_dim=7, s_bias=-10.0):
    """Dropout-free learner whose log-variance head is a constant."""
    net = make_network(channel=channel, input_dim=input_dim, dropout_rate=0.0)
    net.params["W2"][:, -1] = 0.0
    net.params["b2"][-1] = s_bias
    return net


def noisy(make_network, channel, input_dim, s_bias=2.0, seed=1):
    net = make_network(channel=channel, input_dim=input_dim, dropout_rate=0.3, seed=seed)
    net.params["W2"][:, -1] = 0.0
    net.params["b2"][-1] = s_bias
    return net


# decompose

def test_decompose_constant_samples():
    r = decompose(samples([2, 2, 2], [0.5, 0.5, 0.5]))
    assert r.epistemic == 0.0
    assert r.aleatoric == pytest.approx(0.5)
    assert r.total == pytest.approx(0.5)


def test_decompose_identical_samples_have_zero_epistemic():
    """Identical rows give exactly zero spread, even where their float mean is inexact."""
    row = [0.1 + 0.2, -0.7300000000000001]
    r = decompose(samples([row] * 10, [0.3] * 10))
    assert r.epistemic == 0.0
    _, epistemic, _, _ = decompose_many(np.full((3, 10, 2), row), np.full((3, 10), 0.3))
    assert np.all(epistemic == 0.0)


def test_samples_shape_checked():
    with pytest.raises(ValueError):
        PredictiveSamples(means=np.zeros(3), aleatoric_vars=np.zeros(3))
    with pytest.raises(ValueError):
        PredictiveSamples(means=np.zeros((3, 2)), aleatoric_vars=np.zeros(2))


def test_decompose_spread_samples():
    r = decompose(samples([1, 2, 3], [0.1, 0.2, 0.3]))
    assert r.mean == pytest.approx([2.0])
    assert r.epistemic == pytest.approx(2 / 3, rel=1e-12)
    assert r.aleatoric == pytest.approx(0.2, rel=1e-12)
    assert r.total == pytest.approx(13 / 15, rel=1e-12)
    assert r.total == r.epistemic + r.aleatoric


def test_decompose_single_sample():
    r = decompose(samples([0.4], [0.7]))
    assert r.epistemic == 0.0
    assert r.total == pytest.approx(0.7)


def test_decompose_many_matches_two_pass_variance(rng):
    """Vectorized split agrees with numpy's population variance summed over dimensions."""
    means = rng.normal(size=(100_000, 10, 2)) * rng.uniform(0.01, 3.0, size=(100_000, 1, 1))
    aleatoric = rng.uniform(0.0, 2.0, size=(100_000, 10))
    center, epistemic, alea, total = decompose_many(means, aleatoric)
    np.testing.assert_allclose(center, means.mean(axis=1), rtol=1e-12)
    np.testing.assert_allclose(epistemic, means.var(axis=1).sum(axis=1), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(alea, aleatoric.mean(axis=1), rtol=1e-12)
    assert np.all(epistemic >= -1e-12)
    assert np.array_equal(total, epistemic + alea)


def test_decompose_many_matches_single(rng):
    means = rng.normal(size=(5, 4, 2))
    aleatoric = rng.uniform(size=(5, 4))
    _, epistemic, _, total = decompose_many(means, aleatoric)
    for i in range(5):
        r = decompose(samples(means[i], aleatoric[i]))
        assert r.epistemic == pytest.approx(epistemic[i], rel=1e-12)
        assert r.total == pytest.approx(total[i], rel=1e-12)


def test_decompose_permutation_invariant(rng):
    means = rng.normal(size=(10, 2))
    variances = rng.uniform(size=10)
    order = rng.permutation(10)
    a = decompose(samples(means, variances))
    b = decompose(samples(means[order], variances[order]))
    assert a.total == pytest.approx(b.total, rel=1e-12)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)


# mc_sample

def test_mc_sample_without_dropout_is_constant(make_network, rng):
    net = make_network(dropout_rate=0.0)
    drawn = mc_sample(net, rng.normal(size=7), 10, rng)
    assert drawn.count == 10
    assert np.all(drawn.means == drawn.means[0])
    assert np.all(drawn.aleatoric_vars > 0)


def test_mc_sample_single_equals_forward_dropout(make_network):
    net = make_network(dropout_rate=0.3)
    x = np.linspace(-1.0, 1.0, 7)
    drawn = mc_sample(net, x, 1, np.random.default_rng(4))
    mean, s = forward_dropout(net.params, net.spec, x, np.random.default_rng(4))
    np.testing.assert_array_equal(drawn.means[0], mean)
    assert drawn.aleatoric_vars[0] == pytest.approx(np.exp(s))


def test_mc_sample_rejects_zero_count(make_network, rng):
    with pytest.raises(ValueError):
        mc_sample(make_network(), np.zeros(7), 0, rng)


# arbitration

def test_select_lowest_total():
    index, control = min_variance_select([report(0.1, 1.0), report(0.9, 0.5), report(-0.3, 2.0)])
    assert index == 1
    assert control == pytest.approx([0.9])


def test_select_ties_go_to_lowest_index():
    index, _ = min_variance_select([report(0.1, 0.5), report(0.2, 0.5), report(0.3, 0.5)])
    assert index == 0


def test_select_clamps_control():
    _, control = min_variance_select([report([1.7, -2.0], 0.1)])
    np.testing.assert_array_equal(control, [1.0, -1.0])


def test_select_is_argmin_and_order_invariant(rng):
    """True argmin, unchanged under positive scaling and monotone transforms of the totals."""
    for _ in range(200):
        totals = rng.uniform(0.01, 10.0, size=3)
        index, _ = min_variance_select([report(0.0, t) for t in totals])
        assert index == int(np.argmin(totals))
        for transform in (lambda v: 7.5 * v, np.log, np.sqrt, lambda v: v**3):
            assert min_variance_select([report(0.0, transform(t)) for t in totals])[0] == index


def test_select_skips_non_finite():
    index, _ = min_variance_select([report(0.0, float("nan")), report(0.5, 3.0), report(0.1, float("inf"))])
    assert index == 1
    with pytest.raises(NoValidLearnerError):
        min_variance_select([UncertaintyReport.invalid(2), UncertaintyReport.invalid(2)])
    with pytest.raises(ValueError):
        min_variance_select([])


def test_blend_symmetric_modes_cancel():
    """Two equally confident learners turning opposite ways blend into driving straight."""
    assert inverse_variance_blend([report(1.0, 0.3), report(-1.0, 0.3)]) == pytest.approx([0.0])


def test_blend_zero_variance_takes_all():
    assert inverse_variance_blend([report(0.2, 1.0), report(-0.7, 0.0)]) == pytest.approx([-0.7])


def test_blend_hand_value():
    blended = inverse_variance_blend([report(0.0, 1.0), report(1.0, 2.0), report(2.0, 4.0)])
    assert blended == pytest.approx([4 / 7])


def test_blend_in_convex_hull(rng):
    for _ in range(100):
        means = rng.uniform(-1, 1, size=(3, 2))
        totals = rng.uniform(0.01, 5.0, size=3)
        blended = inverse_variance_blend([report(m, t) for m, t in zip(means, totals)])
        assert np.all(blended >= means.min(axis=0) - 1e-12)
        assert np.all(blended <= means.max(axis=0) + 1e-12)


def test_decide_blend_mode_keeps_argmin(make_network):
    nets = [make_network(channel="state"), make_network(channel="left")]
    decision = decide(nets, [report([1.0, 0.0], 0.3), report([-1.0, 0.0], 0.3)], t=1.5, mode="blend")
    assert decision.selected == "state"
    np.testing.assert_allclose(decision.control, [0.0, 0.0])
    assert decision.mode == "blend"


# ensemble_step

def ensemble(make_network):
    return [
        noisy(make_network, "state", 7, seed=1),
        confident(make_network, "left", 32),
        noisy(make_network, "right", 32, seed=2),
    ]


def test_confident_learner_always_selected(make_network, rng):
    nets = ensemble(make_network)
    for step in range(20):
        observations = [rng.normal(size=7), rng.normal(size=32), rng.normal(size=32)]
        rngs = [np.random.default_rng(step * 3 + i) for i in range(3)]
        decision = ensemble_step(observations, nets, 10, rngs, t=step * 0.05)
        assert decision.selected == "left"
        assert decision.reports[1].epistemic == 0.0
        np.testing.assert_allclose(decision.control, np.clip(decision.reports[1].mean, -1, 1))


def test_step_deterministic(make_network, rng):
    nets = ensemble(make_network)
    observations = [rng.normal(size=7), rng.normal(size=32), rng.normal(size=32)]
    a = ensemble_step(observations, nets, 10, [np.random.default_rng(i) for i in range(3)])
    b = ensemble_step(observations, nets, 10, [np.random.default_rng(i) for i in range(3)])
    assert a.to_record() == b.to_record()


@pytest.mark.asyncio
async def test_concurrent_matches_sequential(make_network, rng):
    nets = ensemble(make_network)
    observations = [rng.normal(size=7), rng.normal(size=32), rng.normal(size=32)]
    sequential = ensemble_step(observations, nets, 10, [np.random.default_rng(i) for i in range(3)])
    concurrent = await ensemble_step_async(observations, nets, 10, [np.random.default_rng(i) for i in range(3)])
    assert concurrent.to_record() == sequential.to_record()


def test_mismatched_inputs_rejected(make_network, rng):
    with pytest.raises(ValueError):
        ensemble_step([np.zeros(7)], ensemble(make_network), 10, [rng])


def test_non_finite_learner_excluded(make_network, rng):
    """A learner that overflows is dropped from the decision; the rest still decide."""
    nets = ensemble(make_network)
    nets[1].params["W0"][:] = 1e308
    observations = [rng.normal(size=7), np.full(32, 1e10), rng.normal(size=32)]
    rngs = [np.random.default_rng(i) for i in range(3)]
    decision = ensemble_step(observations, nets, 10, rngs)
    assert decision.selected in ("state", "right")
    assert decision.excluded == (1,)

    record = decision.to_record()
    json.dumps(record, allow_nan=False)
    assert record["excluded"] == ["left"]
    assert record["learners"]["left"]["total"] is None
    assert record["type"] == "decision"
    assert set(record["learners"]) == {"state", "left", "right"}
