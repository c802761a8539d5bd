"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by the user seed and a
path of labels, for instance ``make_rng(seed, "chain", n_index, replicate, c)``.
Labels are hashed to integers, so the streams for different labels are
independent and do not depend on the order in which they are created or on
the process that creates them.
"""

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode())


def make_rng(seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_label_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
