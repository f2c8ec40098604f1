"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by a SeedSequence
built from a master seed and a tuple of integer labels, so any
``(seed, label, replication)`` combination can be regenerated on its own,
in any order and in any process.
"""
from __future__ import annotations

import numpy as np

__all__ = ["generator", "derive_seed", "SALT"]

# label salts keep campaigns that share a master seed on disjoint streams
SALT = {
    "trajectory": 0x6777_0001,
    "estimator": 0x6777_0002,
    "limit": 0x6777_0003,
    "limit_tilde": 0x6777_0004,
    "resample": 0x6777_0005,
    "onestep": 0x6777_0006,
    "stationary": 0x6777_0007,
}

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, labels) -> list[int]:
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    out = [seed]
    for lab in labels:
        lab = int(lab)
        if lab < 0:
            raise ValueError("stream labels must be nonnegative")
        out.append(lab)
    return out


def generator(seed: int, *labels: int) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *labels)``."""
    ss = np.random.SeedSequence(_entropy(seed, labels))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *labels: int) -> int:
    """A 64-bit child seed for ``(seed, *labels)``."""
    ss = np.random.SeedSequence(_entropy(seed, labels))
    return int(ss.generate_state(1, np.uint64)[0])
