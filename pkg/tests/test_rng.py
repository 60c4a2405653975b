"""Tests for seeded random streams"""

import numpy as np

from app.utils.rng import Stream, derive_rng


class TestDeriveRng:
    """Tests for generator derivation"""

    def test_reproducible(self):
        """Same (seed, stream, indices) gives the same numbers"""
        a = derive_rng(7, Stream.TRAINING_NOISE, 1, 2, 3).standard_normal(5)
        b = derive_rng(7, Stream.TRAINING_NOISE, 1, 2, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_independent(self):
        """Different stream ids do not share draws"""
        a = derive_rng(7, Stream.MODEL_INIT).random(5)
        b = derive_rng(7, Stream.EPOCH_SHUFFLE).random(5)
        assert not np.array_equal(a, b)

    def test_indices_matter(self):
        """Sample index i and i + 1 get different streams"""
        a = derive_rng(0, Stream.DATASET_SAMPLE, 0).random(3)
        b = derive_rng(0, Stream.DATASET_SAMPLE, 1).random(3)
        assert not np.array_equal(a, b)

    def test_large_seed(self):
        """Seeds up to 2^64 - 1 are accepted"""
        assert derive_rng(2**64 - 1, Stream.SPLIT).integers(10) < 10
