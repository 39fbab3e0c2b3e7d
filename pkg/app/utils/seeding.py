"""Deterministic sub-seed derivation from the master seed."""
import hashlib

import numpy as np


def derive_seed(master_seed: int, component: str) -> int:
    """Derive a reproducible 63-bit sub-seed for a named component.

    sub-seed = first 8 bytes (big endian) of SHA-256("{master}/{component}"), top bit cleared.
    Distinct component names collide only with SHA-256 prefix collision probability.
    """
    digest = hashlib.sha256(f"{master_seed}/{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def component_rng(master_seed: int, component: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, component))
