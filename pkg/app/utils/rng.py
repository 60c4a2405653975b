"""Seeded random streams

Every random draw in the package comes from a NumPy ``Generator`` backed by
PCG64 and keyed by ``SeedSequence([seed, stream, *indices])``. The same
(seed, stream, indices) tuple yields the same numbers on every machine.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Stream identifiers mixed into the seed sequence"""

    MODEL_INIT = 0
    EPOCH_SHUFFLE = 1
    TRAINING_NOISE = 2
    LATENT_SAMPLE = 3
    DATASET_SAMPLE = 4
    SPLIT = 5


def derive_rng(seed: int, stream: Stream, *indices: int) -> np.random.Generator:
    """Build the generator for one stream (and optional sub-indices)"""
    entropy = [int(seed), int(stream), *(int(i) for i in indices)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
