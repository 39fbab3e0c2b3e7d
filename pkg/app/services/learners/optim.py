"""Adam over a dict of named parameter arrays."""
from dataclasses import dataclass, field

import numpy as np

from app.services.learners.network import NetworkParams


@dataclass
class AdamState:
    """First/second moment estimates and the step count t."""

    t: int = 0
    m: NetworkParams = field(default_factory=dict)
    v: NetworkParams = field(default_factory=dict)


def adam_step(
    params: NetworkParams,
    grads: NetworkParams,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update. Returns new params and state; inputs are left untouched.

        m <- b1 m + (1 - b1) g ; v <- b2 v + (1 - b2) g^2
        param <- param - lr * m_hat / (sqrt(v_hat) + eps)
    """
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params: NetworkParams = {}
    new_m: NetworkParams = {}
    new_v: NetworkParams = {}
    for k, value in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(value)
        elif g.shape != value.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {value.shape}")
        m = beta1 * state.m.get(k, np.zeros_like(value)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, np.zeros_like(value)) + (1.0 - beta2) * (g * g)
        new_params[k] = value - lr * (m / bc1) / (np.sqrt(v / bc2) + epsilon)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(t=t, m=new_m, v=new_v)
