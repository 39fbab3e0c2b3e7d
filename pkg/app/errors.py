"""Exception hierarchy. Each error knows the CLI exit code it maps to."""
from pathlib import Path

from app.constants import EXIT_CONFIG, EXIT_CRASH, EXIT_DIVERGED


class BayesDriveError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ConfigError(BayesDriveError, ValueError):
    """Experiment configuration is missing, malformed or inconsistent."""

    exit_code = EXIT_CONFIG


class NonFiniteError(BayesDriveError, ValueError):
    """A NaN or infinity showed up where only finite values are allowed."""


class NotPositiveDefiniteError(BayesDriveError, ArithmeticError):
    """Regularized control Hessian failed the Cholesky test at some time step."""

    def __init__(self, step: int, regularization: float):
        super().__init__(
            f"control Hessian not positive definite at step {step} (lambda={regularization:g})"
        )
        self.step = step
        self.regularization = regularization


class TrainingDivergedError(BayesDriveError, RuntimeError):
    """Training loss became non-finite."""

    exit_code = EXIT_DIVERGED

    def __init__(self, channel: str, epoch: int):
        super().__init__(f"training of '{channel}' diverged at epoch {epoch}")
        self.channel = channel
        self.epoch = epoch


class ExpertCrashError(BayesDriveError, RuntimeError):
    """The expert left the track while collecting data."""

    exit_code = EXIT_CRASH

    def __init__(self, step: int, dump_path: Path | None = None):
        super().__init__(f"expert crashed at step {step}; trajectory dumped to {dump_path}")
        self.step = step
        self.dump_path = dump_path


class NoValidLearnerError(BayesDriveError, RuntimeError):
    """Every learner in the ensemble produced a non-finite prediction."""
