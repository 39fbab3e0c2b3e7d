"""Monte Carlo dropout sampling and the epistemic/aleatoric variance split.

For K samples (u_k, sigma2_k) of one learner:

    mean       = 1/K sum u_k
    epistemic  = 1/K sum |u_k - mean|^2        (trace of the population covariance)
    aleatoric  = 1/K sum sigma2_k
    total      = epistemic + aleatoric
"""
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.services.learners.loss import clamp_log_variance
from app.services.learners.model import TrainedNetwork
from app.services.learners.network import forward

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class PredictiveSamples:
    means: DoubleArray  # (K, output_dim), row k is sample k
    aleatoric_vars: DoubleArray  # (K,)

    def __post_init__(self) -> None:
        if self.means.ndim != 2 or len(self.means) < 1:
            raise ValueError("need at least one sample, as rows of a 2-D array")
        if self.aleatoric_vars.shape != (len(self.means),):
            raise ValueError("need one aleatoric variance per sample")

    @property
    def count(self) -> int:
        return len(self.means)


@dataclass(frozen=True)
class UncertaintyReport:
    mean: DoubleArray
    epistemic: float
    aleatoric: float
    total: float

    @classmethod
    def invalid(cls, output_dim: int) -> "UncertaintyReport":
        """Placeholder for a learner whose prediction could not be used."""
        nan = float("nan")
        return cls(mean=np.full(output_dim, nan), epistemic=nan, aleatoric=nan, total=nan)

    @property
    def valid(self) -> bool:
        return math.isfinite(self.total) and bool(np.all(np.isfinite(self.mean)))


def mc_sample(net: TrainedNetwork, observation, count: int, rng: np.random.Generator) -> PredictiveSamples:
    """count stochastic passes in one batch: the observation is duplicated count times.

    Each row gets its own dropout masks; row k is sample k whatever the scheduling.
    """
    if count < 1:
        raise ValueError(f"sample count must be at least 1, got {count}")
    x = net.normalize(np.asarray(observation, dtype=float).reshape(1, -1))
    record = forward(net.params, net.spec, np.repeat(x, count, axis=0), rng=rng)
    return PredictiveSamples(
        means=record.mean.copy(),
        aleatoric_vars=np.exp(clamp_log_variance(record.log_var, source=net.channel)),
    )


def _spread(means, axis: int):
    """Mean squared distance to the sample mean along ``axis``, summed over output dimensions.

    Deviations are taken from the first sample, so identical samples give exactly zero.
    """
    shifted = means - np.take(means, [0], axis=axis)
    centered = shifted - shifted.mean(axis=axis, keepdims=True)
    return np.mean(np.sum(centered**2, axis=-1), axis=axis)


def decompose(samples: PredictiveSamples) -> UncertaintyReport:
    mean = samples.means.mean(axis=0)
    epistemic = float(_spread(samples.means, axis=0))
    aleatoric = float(np.mean(samples.aleatoric_vars))
    return UncertaintyReport(mean=mean, epistemic=epistemic, aleatoric=aleatoric, total=epistemic + aleatoric)


def decompose_many(means, aleatoric_vars) -> tuple[DoubleArray, DoubleArray, DoubleArray, DoubleArray]:
    """Vectorized decompose over N sample sets: means (N, K, D), aleatoric_vars (N, K).

    Returns (mean (N, D), epistemic (N,), aleatoric (N,), total (N,)).
    """
    means = np.asarray(means, dtype=float)
    aleatoric_vars = np.asarray(aleatoric_vars, dtype=float)
    center = means.mean(axis=1)
    epistemic = _spread(means, axis=1)
    aleatoric = aleatoric_vars.mean(axis=1)
    return center, epistemic, aleatoric, epistemic + aleatoric
