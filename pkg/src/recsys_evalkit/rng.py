"""Seeded random streams.

Everything random in the toolkit draws from numpy's Philox counter-based
generator. Streams are derived from a root seed plus string labels by
hashing, so adding or removing one consumer never perturbs another.
"""

import hashlib

import numpy as np

GENERATOR = "numpy.random.Philox"


def _key(seed, *labels):
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        if isinstance(label, (bytes, bytearray, memoryview)):
            h.update(bytes(label))
        else:
            h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def stream(seed, *labels) -> np.random.Generator:
    """A generator keyed by `seed` and any number of labels."""
    return np.random.Generator(np.random.Philox(key=_key(seed, *labels)))


def user_stream(seed, user_token) -> np.random.Generator:
    return stream(seed, "user", user_token)


def derive_seed(seed, *labels) -> int:
    """A 63-bit integer seed derived from `seed` and labels."""
    return _key(seed, *labels) & ((1 << 63) - 1)
