"""Named random sub-streams derived from a single experiment seed.

Each consumer (split, init, shuffle, dropout, noise, ...) draws from its own
stream, so adding draws in one place never perturbs another.
"""

import zlib

import numpy as np

STREAMS = ("split", "init", "shuffle", "dropout", "noise", "synth", "tsne")


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
