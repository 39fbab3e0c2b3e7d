from dataclasses import dataclass, field

import numpy as np

from app.schemas import MLPSpec
from app.services.learners.network import NetworkParams, deterministic_forward


@dataclass(frozen=True)
class TrainedNetwork:
    """A trained learner: architecture, parameters and the input standardization it was fit with.

    Immutable after training; sampling tasks share it and bring their own random streams.
    """

    channel: str
    spec: MLPSpec
    params: NetworkParams
    input_mean: np.ndarray
    input_std: np.ndarray
    seed: int
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("input_mean", "input_std"):
            if getattr(self, name).shape != (self.spec.input_dim,):
                raise ValueError(f"{name} does not match input_dim {self.spec.input_dim}")
        if not np.all(self.input_std > 0):
            raise ValueError("input_std must be positive")

    def normalize(self, observations) -> np.ndarray:
        return (np.asarray(observations, dtype=float) - self.input_mean) / self.input_std

    def predict(self, observation):
        """Dropout-free (mean, s); diagnostics only, decisions use MC sampling."""
        return deterministic_forward(self.params, self.spec, self.normalize(observation))
