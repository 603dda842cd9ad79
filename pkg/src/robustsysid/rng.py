"""Deterministic sub-stream derivation from one master seed.

Every random quantity in the package (inputs, attack directions, attack
lengths, Bernoulli schedules, per-trial seeds) draws from its own generator,
keyed by the master seed plus a short purpose key. Streams are independent by
construction, so consuming more draws from one never perturbs another --
adding an input at time i cannot change the attack injected at time j.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1

# Fixed stream ids. Never renumber: doing so silently changes every shipped seed.
STREAM_IDS = {
    "schedule": 0,
    "inputs": 1,
    "directions": 2,
    "lengths": 3,
    "trial": 4,
    "system": 5,
}


def _key_component(part) -> int:
    if isinstance(part, str):
        if part in STREAM_IDS:
            return STREAM_IDS[part]
        return zlib.crc32(part.encode()) & _MASK32
    return int(part) & _MASK32


def seed_sequence(seed: int, *key) -> np.random.SeedSequence:
    """SeedSequence for the sub-stream named by ``key`` under ``seed``."""
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(_key_component(p) for p in key),
    )


def substream(seed: int, *key) -> np.random.Generator:
    """Independent Generator for the sub-stream named by ``key``."""
    return np.random.default_rng(seed_sequence(seed, *key))


def trial_seed(seed: int, *key) -> int:
    """A fresh 64-bit master seed for one trial of a batch run.

    Derived, not sequential: trial k's seed never depends on how many draws
    trials 0..k-1 consumed.
    """
    state = seed_sequence(seed, "trial", *key).generate_state(1, np.uint64)
    return int(state[0])
