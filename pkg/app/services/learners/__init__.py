from app.services.learners.checkpoint import load_checkpoint, save_checkpoint
from app.services.learners.loss import batch_loss_and_grad, heteroscedastic_loss, reset_clamp_warnings
from app.services.learners.model import TrainedNetwork
from app.services.learners.network import (
    ForwardRecord,
    NetworkParams,
    backward,
    concrete_dropout_forward,
    concrete_regularizer,
    deterministic_forward,
    forward,
    forward_dropout,
    init_params,
)
from app.services.learners.optim import AdamState, adam_step
from app.services.learners.training import TrainBatch, train

__all__ = [
    "AdamState",
    "ForwardRecord",
    "NetworkParams",
    "TrainBatch",
    "TrainedNetwork",
    "adam_step",
    "backward",
    "batch_loss_and_grad",
    "concrete_dropout_forward",
    "concrete_regularizer",
    "deterministic_forward",
    "forward",
    "forward_dropout",
    "heteroscedastic_loss",
    "init_params",
    "load_checkpoint",
    "reset_clamp_warnings",
    "save_checkpoint",
    "train",
]
