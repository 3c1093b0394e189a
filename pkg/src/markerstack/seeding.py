"""Named sub-seed derivation.

Every random component draws from ``sub_seed(global_seed, name)`` so that
adding a consumer never shifts the stream of another one.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def sub_seed(seed: int, name: str) -> int:
    """Return a 64-bit seed derived from ``seed`` and a component name."""
    payload = f"{int(seed) & _MASK64}:{name}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def rng_for(seed: int, name: str | None = None) -> np.random.Generator:
    if name is None:
        return np.random.default_rng(int(seed) & _MASK64)
    return np.random.default_rng(sub_seed(seed, name))
