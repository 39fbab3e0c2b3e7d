"""Numeric guards shared by the simulation, solver and networks."""
import math

import numpy as np

from app.errors import NonFiniteError


def require_finite(values, what: str) -> None:
    """Raise NonFiniteError naming ``what`` if any entry is NaN or infinite."""
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite values in {what}")


def wrap_angle(angle):
    """Map angles into (-pi, pi]. Works on scalars and arrays."""
    return -(np.mod(-np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
