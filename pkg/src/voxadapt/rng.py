"""Named deterministic random streams.

Every source of randomness in the package (parameter init, data order,
dropout, corpus synthesis) is derived from a single 64-bit master seed
plus a stream name, so independent subsystems never share or perturb
each other's state.
"""

import hashlib

import numpy as np


def stream_seed(master_seed: int, name: str) -> int:
    """Derive a 64-bit child seed for the named stream."""
    digest = hashlib.blake2b(
        f"{master_seed & 0xFFFFFFFFFFFFFFFF}:{name}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Generator for the named stream; same (seed, name) -> same sequence."""
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, name)))
