"""Fully connected ReLU network with dropout on hidden activations and a log-variance head.

Parameters live in a flat dict so the optimizer and checkpoints can walk them by name:

    W{l}, b{l}     weight layer l = 0 .. len(hidden_widths)   (the last one is the output layer)
    p_logit{l}     dropout logit of hidden layer l (concrete mode only)

The output layer emits output_dim means followed by one scalar s = log sigma^2.
Dropout is inverted: kept activations are scaled by 1 / (1 - p) at every sampling pass.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from app.errors import NonFiniteError
from app.schemas import MLPSpec
from app.utils.numerics import sigmoid

DoubleArray = npt.NDArray[np.float64]
NetworkParams = dict[str, DoubleArray]

# Uniform draws of the concrete relaxation are kept away from 0 and 1
CONCRETE_EPS = 1e-7


def layer_sizes(spec: MLPSpec) -> list[int]:
    return [spec.input_dim, *spec.hidden_widths, spec.output_dim + 1]


def init_params(spec: MLPSpec, rng: np.random.Generator) -> NetworkParams:
    """He fan-in initialization, zero biases (including the s head)."""
    sizes = layer_sizes(spec)
    params: NetworkParams = {}
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"W{l}"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"b{l}"] = np.zeros(fan_out)
    if spec.dropout_mode == "concrete":
        rate = min(max(spec.dropout_rate, 1e-3), 1.0 - 1e-3)
        for l in range(len(spec.hidden_widths)):
            params[f"p_logit{l}"] = np.array([math.log(rate / (1.0 - rate))])
    return params


def dropout_probabilities(params: NetworkParams, spec: MLPSpec) -> list[float]:
    """Current drop probability of each hidden layer."""
    if spec.dropout_mode == "concrete":
        return [float(sigmoid(params[f"p_logit{l}"])[0]) for l in range(len(spec.hidden_widths))]
    return [spec.dropout_rate] * len(spec.hidden_widths)


def check_params(params: NetworkParams, spec: MLPSpec) -> None:
    sizes = layer_sizes(spec)
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if params[f"W{l}"].shape != (fan_in, fan_out) or params[f"b{l}"].shape != (fan_out,):
            raise ValueError(f"layer {l} parameters do not match the network spec")
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite parameter {name}")


@dataclass
class ForwardRecord:
    """Everything the backward pass needs from one (batched) stochastic forward pass."""

    inputs: list[DoubleArray] = field(default_factory=list)  # input to each weight layer
    pre: list[DoubleArray] = field(default_factory=list)  # hidden pre-activations
    relu: list[DoubleArray] = field(default_factory=list)  # hidden activations before dropout
    scale: list[DoubleArray | None] = field(default_factory=list)  # dropout multipliers, None if no dropout
    drop: list[DoubleArray | None] = field(default_factory=list)  # relaxed drop values (concrete)
    probs: list[float] = field(default_factory=list)
    output: DoubleArray | None = None

    @property
    def mean(self) -> DoubleArray:
        return self.output[:, :-1]

    @property
    def log_var(self) -> DoubleArray:
        return self.output[:, -1]


def forward(
    params: NetworkParams,
    spec: MLPSpec,
    inputs,
    rng: np.random.Generator | None = None,
    noise: list[DoubleArray] | None = None,
    dropout: bool = True,
) -> ForwardRecord:
    """Batched forward pass over inputs (B, input_dim).

    Dropout masks are drawn layer by layer from ``rng``. ``noise`` replaces the draws: keep
    masks in fixed mode, uniform u in concrete mode. With dropout=False, or a zero fixed rate,
    hidden activations pass through untouched and no draws are made.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"expected inputs of width {spec.input_dim}, got {x.shape[1]}")
    probs = dropout_probabilities(params, spec)
    concrete = spec.dropout_mode == "concrete"
    record = ForwardRecord(probs=probs)

    h = x
    for l, p in enumerate(probs):
        record.inputs.append(h)
        z = h @ params[f"W{l}"] + params[f"b{l}"]
        a = np.maximum(z, 0.0)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite activation in hidden layer {l}")
        record.pre.append(z)
        record.relu.append(a)

        if not dropout or (not concrete and p == 0.0):
            record.scale.append(None)
            record.drop.append(None)
            h = a
            continue
        layer_noise = None if noise is None else np.asarray(noise[l], dtype=float)
        if concrete:
            drop = _concrete_drop(params[f"p_logit{l}"][0], a.shape, spec.temperature, rng, layer_noise)
            scale = (1.0 - drop) / (1.0 - p)
            record.drop.append(drop)
        else:
            keep = layer_noise if layer_noise is not None else _require(rng).random(a.shape) < 1.0 - p
            scale = keep / (1.0 - p)
            record.drop.append(None)
        record.scale.append(scale)
        h = a * scale

    last = len(probs)
    record.inputs.append(h)
    record.output = h @ params[f"W{last}"] + params[f"b{last}"]
    if not np.all(np.isfinite(record.output)):
        raise NonFiniteError("non-finite activation in output layer")
    return record


def _require(rng: np.random.Generator | None) -> np.random.Generator:
    if rng is None:
        raise ValueError("a random stream is required for dropout sampling")
    return rng


def _concrete_drop(logit: float, shape, temperature: float, rng, noise) -> DoubleArray:
    """Relaxed drop indicator sigmoid((logit + log u - log(1 - u)) / T)."""
    u = noise if noise is not None else _require(rng).random(shape)
    u = np.clip(u, CONCRETE_EPS, 1.0 - CONCRETE_EPS)
    return sigmoid((logit + np.log(u) - np.log1p(-u)) / temperature)


def forward_dropout(params: NetworkParams, spec: MLPSpec, x, rng: np.random.Generator):
    """One stochastic pass on a single input vector. Returns (mean, s)."""
    record = forward(params, spec, np.asarray(x, dtype=float)[None], rng=rng)
    return record.mean[0], float(record.log_var[0])


def deterministic_forward(params: NetworkParams, spec: MLPSpec, x):
    """Dropout disabled. Returns (mean, s) for a vector or (means, s) for a batch."""
    x = np.asarray(x, dtype=float)
    record = forward(params, spec, x, dropout=False)
    if x.ndim == 1:
        return record.mean[0], float(record.log_var[0])
    return record.mean, record.log_var


def concrete_regularizer(params: NetworkParams, spec: MLPSpec) -> float:
    """Weight + dropout-entropy regularizer of concrete dropout.

    For each hidden layer l with drop probability p feeding weight layer l+1:
        weight_regularizer * sum(W^2 + b^2) / (1 - p)
        + dropout_regularizer * width_l * (p log p + (1 - p) log(1 - p))
    """
    if spec.dropout_mode != "concrete":
        return 0.0
    total = 0.0
    for l, p in enumerate(dropout_probabilities(params, spec)):
        squares = np.sum(params[f"W{l + 1}"] ** 2) + np.sum(params[f"b{l + 1}"] ** 2)
        entropy = p * math.log(p) + (1.0 - p) * math.log1p(-p)
        total += spec.weight_regularizer * squares / (1.0 - p)
        total += spec.dropout_regularizer * spec.hidden_widths[l] * entropy
    return float(total)


def concrete_dropout_forward(
    params: NetworkParams,
    spec: MLPSpec,
    x,
    temperature: float,
    rng: np.random.Generator,
    noise: list[DoubleArray] | None = None,
):
    """Concrete-relaxed stochastic pass. Returns (mean, s, regularizer value)."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if spec.dropout_mode != "concrete":
        raise ValueError("network was not built with concrete dropout")
    spec = spec.model_copy(update={"temperature": temperature})
    x = np.asarray(x, dtype=float)
    record = forward(params, spec, x, rng=rng, noise=noise)
    mean, log_var = (record.mean[0], float(record.log_var[0])) if x.ndim == 1 else (record.mean, record.log_var)
    return mean, log_var, concrete_regularizer(params, spec)


def backward(
    params: NetworkParams,
    spec: MLPSpec,
    record: ForwardRecord,
    grad_mean: DoubleArray,
    grad_log_var: DoubleArray,
) -> NetworkParams:
    """Gradients of a loss w.r.t. every parameter, given dL/d(mean) (B, D) and dL/ds (B,).

    Masks are those recorded in the forward pass; dropped units pass no gradient.
    Regularizer gradients are not included (see concrete_regularizer_grad).
    """
    grad_mean = np.atleast_2d(np.asarray(grad_mean, dtype=float))
    grad_log_var = np.asarray(grad_log_var, dtype=float).reshape(-1)
    if grad_mean.shape != record.mean.shape or grad_log_var.shape != record.log_var.shape:
        raise ValueError("loss gradient does not match the recorded forward pass")

    grads: NetworkParams = {}
    g = np.column_stack([grad_mean, grad_log_var])
    last = len(record.probs)
    grads[f"W{last}"] = record.inputs[last].T @ g
    grads[f"b{last}"] = g.sum(axis=0)
    g_h = g @ params[f"W{last}"].T

    for l in range(last - 1, -1, -1):
        scale = record.scale[l]
        g_a = g_h if scale is None else g_h * scale
        if spec.dropout_mode == "concrete":
            grads[f"p_logit{l}"] = np.array([_logit_grad(record, l, g_h, spec.temperature)])
        g_z = g_a * (record.pre[l] > 0.0)
        grads[f"W{l}"] = record.inputs[l].T @ g_z
        grads[f"b{l}"] = g_z.sum(axis=0)
        if l > 0:
            g_h = g_z @ params[f"W{l}"].T
    return grads


def _logit_grad(record: ForwardRecord, l: int, g_h: DoubleArray, temperature: float) -> float:
    drop = record.drop[l]
    if drop is None:
        return 0.0
    p = record.probs[l]
    # h = a (1 - drop) / (1 - p); d drop / d logit = drop (1 - drop) / T, d 1/(1-p) / d logit = p / (1 - p)
    d_scale = (-drop * (1.0 - drop) / temperature + (1.0 - drop) * p) / (1.0 - p)
    return float(np.sum(g_h * record.relu[l] * d_scale))


def concrete_regularizer_grad(params: NetworkParams, spec: MLPSpec) -> NetworkParams:
    """Gradient of concrete_regularizer; empty in fixed mode."""
    grads: NetworkParams = {}
    if spec.dropout_mode != "concrete":
        return grads
    for l, p in enumerate(dropout_probabilities(params, spec)):
        W, b = params[f"W{l + 1}"], params[f"b{l + 1}"]
        squares = np.sum(W**2) + np.sum(b**2)
        grads[f"W{l + 1}"] = 2.0 * spec.weight_regularizer * W / (1.0 - p)
        grads[f"b{l + 1}"] = 2.0 * spec.weight_regularizer * b / (1.0 - p)
        logit = float(params[f"p_logit{l}"][0])
        # d/dlogit of the entropy term is logit * p (1 - p)
        d_logit = spec.weight_regularizer * squares * p / (1.0 - p)
        d_logit += spec.dropout_regularizer * spec.hidden_widths[l] * logit * p * (1.0 - p)
        grads[f"p_logit{l}"] = np.array([d_logit])
    return grads


def add_grads(a: NetworkParams, b: NetworkParams) -> NetworkParams:
    out = {k: v.copy() for k, v in a.items()}
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v.copy()
    return out


def param_count(params: NetworkParams) -> int:
    return int(sum(v.size for v in params.values()))
