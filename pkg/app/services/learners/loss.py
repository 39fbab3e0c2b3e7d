"""Heteroscedastic regression loss with a learned log-variance s = log sigma^2.

    L(u_hat, s; u*) = 1/2 exp(-s) |u* - u_hat|^2 + 1/2 s

For a fixed residual r the minimum over s sits at s = log |r|^2 with value 1/2 (1 + log |r|^2).
"""
import logging

import numpy as np

from app.constants import LOG_VARIANCE_CLAMP

logger = logging.getLogger(__name__)


# Sources that already logged a clamp warning since the last reset
_reported: set[str] = set()


def reset_clamp_warnings() -> None:
    """Let every source warn again on its next clamp."""
    _reported.clear()


def clamp_log_variance(s, source: str = "loss"):
    """Clamp s to [-20, 20] so exp(-s) cannot overflow.

    The first clamp per source logs a warning, repeats go to debug until reset_clamp_warnings().
    """
    s = np.asarray(s, dtype=float)
    clipped = np.clip(s, -LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP)
    count = int(np.sum(clipped != s))
    if count:
        level = logging.DEBUG if source in _reported else logging.WARNING
        _reported.add(source)
        logger.log(
            level, "[%s] log-variance outside [-%g, %g] clamped (%d values)",
            source, LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP, count,
        )
    return clipped


def heteroscedastic_loss(mean, s, target) -> float:
    """Loss of one prediction (vector mean, scalar s) against a target vector."""
    residual = np.asarray(target, dtype=float) - np.asarray(mean, dtype=float)
    s = float(clamp_log_variance(s))
    return float(0.5 * np.exp(-s) * np.sum(residual**2) + 0.5 * s)


def batch_loss_and_grad(means, log_vars, targets):
    """Mean loss over a batch and its gradients w.r.t. means (B, D) and s (B,).

    Clamped entries of s get zero gradient.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    raw = np.asarray(log_vars, dtype=float).reshape(-1)
    s = clamp_log_variance(raw)
    count = len(means)

    residual = targets - means
    sq = np.sum(residual**2, axis=1)
    precision = np.exp(-s)
    loss = float(np.mean(0.5 * precision * sq + 0.5 * s))
    grad_mean = -(precision[:, None] * residual) / count
    grad_s = np.where(s == raw, 0.5 - 0.5 * precision * sq, 0.0) / count
    return loss, grad_mean, grad_s
