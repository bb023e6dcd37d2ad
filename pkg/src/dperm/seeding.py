"""Deterministic sub-seed derivation.

A master seed is expanded into independent stream seeds by hashing the
master seed together with a tuple of stream identifiers::

    derive_seed(master, "noise", 3, 0.5) = first 8 bytes (little endian) of
        blake2b(repr((master, "noise", 3, 0.5)), digest_size=8)

Keys are rendered with ``repr`` so floats keep full precision. The result is
a 64-bit unsigned integer suitable for ``numpy.random.default_rng``. Because
each stream's seed depends only on its identifiers, replicates can run in any
order or in parallel and still reproduce bit-exactly.
"""

import hashlib

import numpy as np


def derive_seed(master, *keys):
    payload = repr((int(master),) + tuple(keys)).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed_or_rng):
    """Return a Generator; integers are treated as seeds, Generators pass through."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(int(seed_or_rng))
