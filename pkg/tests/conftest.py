import numpy as np
import pytest

from app.schemas import (
    CostConfig,
    DDPConfig,
    ExperimentConfig,
    MLPSpec,
    RayConfig,
    TrackSpec,
    VehicleConfig,
)
from app.services.learners import TrainedNetwork, init_params


@pytest.fixture
def track():
    """Default counterclockwise oval."""
    return TrackSpec()


@pytest.fixture
def vehicle():
    return VehicleConfig()


@pytest.fixture
def rays():
    return RayConfig()


@pytest.fixture
def cost():
    return CostConfig()


@pytest.fixture
def ddp():
    return DDPConfig()


@pytest.fixture
def config():
    return ExperimentConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_network():
    """Factory for small untrained networks wrapped as TrainedNetwork."""

    def _make(channel="state", input_dim=7, hidden=(8, 8), dropout_rate=0.1, mode="fixed", seed=0):
        spec = MLPSpec(
            input_dim=input_dim,
            hidden_widths=hidden,
            output_dim=2,
            dropout_rate=dropout_rate,
            dropout_mode=mode,
        )
        params = init_params(spec, np.random.default_rng(seed))
        return TrainedNetwork(
            channel=channel,
            spec=spec,
            params=params,
            input_mean=np.zeros(input_dim),
            input_std=np.ones(input_dim),
            seed=seed,
        )

    return _make
