"""Seeded, splittable randomness.

Every random draw in the testbed comes from a Philox counter-based generator keyed by the
run seed plus a stream label, so stages never share or consume each other's state.
"""

import zlib

import numpy as np


def stream_key(label: str) -> int:
    """Stable 32-bit key for a stream label."""
    return zlib.crc32(label.encode("utf-8"))


def make_rng(seed: int, *streams: str) -> np.random.Generator:
    """Create an independent generator for ``seed`` and a path of stream labels.

    Args:
        seed: 64-bit run seed.
        streams: Labels identifying the consumer, e.g. ``("experts", "A")``.

    Returns:
        A numpy Generator backed by Philox.
    """
    sequence = np.random.SeedSequence(
        entropy=seed & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(stream_key(s) for s in streams)
    )
    return np.random.Generator(np.random.Philox(sequence))
