"""Batch imitation learning of one learner on (observation, expert control) pairs."""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.errors import NonFiniteError, TrainingDivergedError
from app.schemas import MLPSpec, TrainingConfig
from app.services.learners.loss import batch_loss_and_grad
from app.services.learners.model import TrainedNetwork
from app.services.learners.network import (
    NetworkParams,
    add_grads,
    backward,
    concrete_regularizer,
    concrete_regularizer_grad,
    forward,
    init_params,
)
from app.services.learners.optim import AdamState, adam_step
from app.utils.seeding import component_rng

logger = logging.getLogger(__name__)

# Input dimensions with a spread below this are left unscaled
MIN_INPUT_STD = 1e-8


@dataclass(frozen=True)
class TrainBatch:
    """Observations (B, input_dim) with the expert controls (B, output_dim) they map to."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D")
        if len(self.inputs) != len(self.targets):
            raise ValueError(f"row counts differ: {len(self.inputs)} inputs, {len(self.targets)} targets")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise NonFiniteError("non-finite values in training batch")

    def __len__(self) -> int:
        return len(self.inputs)


def initial_params(spec: MLPSpec, seed: int) -> NetworkParams:
    """The parameters train() starts from for a given seed."""
    return init_params(spec, component_rng(seed, "init"))


def input_normalization(inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = inputs.mean(axis=0)
    std = inputs.std(axis=0)
    return mean, np.where(std < MIN_INPUT_STD, 1.0, std)


def _merge(dataset: TrainBatch | Sequence[TrainBatch]) -> TrainBatch:
    if isinstance(dataset, TrainBatch):
        return dataset
    batches = list(dataset)
    if not batches:
        raise ValueError("dataset is empty")
    return TrainBatch(
        inputs=np.concatenate([b.inputs for b in batches]),
        targets=np.concatenate([b.targets for b in batches]),
    )


def train(
    spec: MLPSpec,
    dataset: TrainBatch | Sequence[TrainBatch],
    training: TrainingConfig,
    seed: int,
    channel: str = "learner",
) -> TrainedNetwork:
    """Minimize the mean heteroscedastic loss with Adam on shuffled minibatches.

    Every example gets a fresh dropout mask on every visit. Deterministic given the seed.
    The loss history holds the per-epoch mean of the minibatch losses.
    """
    data = _merge(dataset)
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if data.inputs.shape[1] != spec.input_dim or data.targets.shape[1] != spec.output_dim:
        raise ValueError(
            f"dataset shape {data.inputs.shape[1]}->{data.targets.shape[1]} does not fit "
            f"network {spec.input_dim}->{spec.output_dim}"
        )

    mean, std = input_normalization(data.inputs)
    x = (data.inputs - mean) / std
    y = data.targets
    params = initial_params(spec, seed)
    rng = component_rng(seed, "train")
    state = AdamState()
    history: list[float] = []
    count = len(data)

    for epoch in range(1, training.epochs + 1):
        order = rng.permutation(count)
        total = 0.0
        try:
            for start in range(0, count, training.batch_size):
                idx = order[start:start + training.batch_size]
                record = forward(params, spec, x[idx], rng=rng)
                loss, grad_mean, grad_s = batch_loss_and_grad(record.mean, record.log_var, y[idx])
                grads = backward(params, spec, record, grad_mean, grad_s)
                if spec.dropout_mode == "concrete":
                    loss += concrete_regularizer(params, spec)
                    grads = add_grads(grads, concrete_regularizer_grad(params, spec))
                if not np.isfinite(loss):
                    raise TrainingDivergedError(channel, epoch)
                params, state = adam_step(
                    params, grads, state,
                    lr=training.learning_rate,
                    beta1=training.beta1,
                    beta2=training.beta2,
                    epsilon=training.epsilon,
                )
                total += loss * len(idx)
        except NonFiniteError as exc:
            raise TrainingDivergedError(channel, epoch) from exc

        history.append(total / count)
        if epoch % training.log_every == 0 or epoch == training.epochs:
            logger.info("[%s] epoch %d/%d loss %.5f", channel, epoch, training.epochs, history[-1])

    return TrainedNetwork(
        channel=channel,
        spec=spec,
        params=params,
        input_mean=mean,
        input_std=std,
        seed=seed,
        loss_history=history,
    )
