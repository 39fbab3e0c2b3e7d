from abc import ABC, abstractmethod

import numpy as np

from app.schemas import FaultSchedule
from app.services.sensors.faults import fault_active


class SensorChannel(ABC):
    """Abstract base class for observation channels.

    Each channel owns its random stream, so channel outputs do not depend on the order in
    which channels are evaluated.
    """

    def __init__(self, schedule: FaultSchedule, rng: np.random.Generator):
        self.schedule = schedule
        self.rng = rng
        self.faulted = False

    @property
    @abstractmethod
    def name(self) -> str:
        """Channel id, also the name of the learner bound to it."""
        pass

    @property
    @abstractmethod
    def input_dim(self) -> int:
        """Length of the observation vector."""
        pass

    @abstractmethod
    def _read(self, state: np.ndarray, faulted: bool) -> np.ndarray:
        """
        Produce this channel's observation of a state.

        Args:
            state: True 7-vector vehicle state
            faulted: Whether the channel's fault model applies at this step

        Returns:
            Observation vector of length input_dim
        """
        pass

    def observe(self, state: np.ndarray, t: float) -> np.ndarray:
        """Observe the true state at time t, corrupted if the schedule says so."""
        self.faulted = fault_active(self.schedule, self.name, t, self.rng)
        return self._read(state, self.faulted)
