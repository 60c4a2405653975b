"""Tests for the channel-compression autoencoder and cross evaluation"""

from pathlib import Path

import numpy as np
import pytest

from app.core.errors import InvalidInputError, ShapeMismatchError
from app.models.schemas import ArrayConfig, CompressorConfig, PathRange, ScenarioSpec, VaeConfig
from app.services.compressor import (
    ChannelCompressor,
    cross_eval,
    eval_nmse,
    load_compressor,
    reconstruct_channels,
    train_compressor,
)
from app.services.datasets import generate_dataset, load_scenario
from app.services.genmodel import sample_channels, train

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "scenarios"


def make_dataset(theta_a, theta_d, count=24, n=4, seed=0):
    spec = ScenarioSpec(
        paths=[PathRange(theta_a_range=theta_a, theta_d_range=theta_d, gain_range=(0.5, 1.0))],
        array=ArrayConfig(n_t=n, n_r=n),
        seed=seed,
    )
    return generate_dataset(spec, count)


@pytest.fixture
def config():
    return CompressorConfig(code_dim=4, hidden=[16], epochs=5, batch_size=8, seed=3)


@pytest.fixture
def train_set():
    return make_dataset((0.2, 0.6), (-0.6, -0.2), seed=1)


class TestChannelCompressor:
    """Tests for the network itself"""

    def test_code_length(self, config):
        """Encoder output has code_dim entries"""
        model = ChannelCompressor(config, ArrayConfig(n_t=4, n_r=4), np.random.default_rng(0))
        code = model.encode(np.zeros((3, 32)))
        assert code.shape == (3, 4)
        assert model.decode(code).shape == (3, 32)

    def test_code_must_compress(self):
        """code_dim >= 2 * n_r * n_t is rejected"""
        with pytest.raises(InvalidInputError):
            ChannelCompressor(CompressorConfig(code_dim=32), ArrayConfig(n_t=4, n_r=4), np.random.default_rng(0))


class TestTraining:
    """Tests for training and scoring a compressor"""

    def test_zeroed_decoder_nmse_one(self, config, train_set):
        """A decoder that outputs zeros scores NMSE 1"""
        ckpt = train_compressor(train_set, config)
        for name in ckpt.tensors:
            if name.startswith("decoder."):
                ckpt.tensors[name] = np.zeros_like(ckpt.tensors[name])
        assert eval_nmse(ckpt, train_set) == pytest.approx(1.0)

    def test_final_train_nmse_recorded(self, config, train_set):
        """The checkpoint records its training-set NMSE"""
        ckpt = train_compressor(train_set, config)
        assert eval_nmse(ckpt, train_set) <= ckpt.extra["final_train_nmse"] + 1e-6
        assert len(ckpt.history) == 5

    def test_deterministic(self, config, train_set):
        """Same data and seed give identical weights"""
        a = train_compressor(train_set, config)
        b = train_compressor(train_set, config)
        for name in a.tensors:
            np.testing.assert_array_equal(a.tensors[name], b.tensors[name])

    def test_reconstruction_in_original_units(self, config, train_set):
        """Reconstructions keep the shape and carry unit scale"""
        ckpt = train_compressor(train_set, config)
        recon = reconstruct_channels(ckpt, train_set)
        assert recon.samples.shape == train_set.samples.shape
        assert recon.scale == 1.0

    def test_wrong_checkpoint_kind(self, config, train_set):
        """Generative checkpoints are rejected"""
        ckpt = train_compressor(train_set, config)
        ckpt.kind = "vae"
        with pytest.raises(InvalidInputError):
            load_compressor(ckpt)

    def test_array_mismatch(self, config, train_set):
        """Test channels must match the trained array size"""
        ckpt = train_compressor(train_set, config)
        with pytest.raises(ShapeMismatchError):
            eval_nmse(ckpt, make_dataset((0.2, 0.6), (-0.6, -0.2), n=2))


class TestCrossEval:
    """Tests for the train x test NMSE table"""

    def test_single_pair(self, config, train_set):
        """One training set and one test set give a 1x1 table"""
        table = cross_eval({"a": train_set}, {"a": train_set}, config)
        assert table.train_names == ["a"]
        assert len(table.nmse) == 1 and len(table.nmse[0]) == 1
        assert table.nmse[0][0] >= 0.0

    def test_two_by_two(self, config, train_set):
        """Rows follow training sets, columns follow test sets"""
        other = make_dataset((-0.5, -0.1), (0.1, 0.5), seed=2)
        table = cross_eval({"a": train_set, "b": other}, {"a": train_set, "b": other}, config)
        assert table.train_names == ["a", "b"]
        assert table.test_names == ["a", "b"]
        assert np.array(table.nmse).shape == (2, 2)

    def test_mismatched_arrays_rejected(self, config, train_set):
        """All datasets must share one array size"""
        small = make_dataset((0.2, 0.6), (-0.6, -0.2), n=2)
        with pytest.raises(ShapeMismatchError):
            cross_eval({"a": train_set}, {"b": small}, config)

    def test_empty_rejected(self, config, train_set):
        """At least one training set is needed"""
        with pytest.raises(InvalidInputError):
            cross_eval({}, {"a": train_set}, config)

    @pytest.mark.slow
    def test_matched_pairs_beat_mismatched(self):
        """Rows trained on A or its generated copy score lower on A and G_A than on B and G_B"""
        sets = {}
        for name in ("a", "b"):
            real = generate_dataset(load_scenario(FIXTURES / f"scenario_{name}.json"), 2000)
            generator = train(real, VaeConfig(epochs=30, batch_size=32, seed=0))
            sets[name] = real
            sets[f"g_{name}"] = sample_channels(generator, 2000, seed=1).dataset

        config = CompressorConfig(code_dim=32, hidden=[256], epochs=40, batch_size=64, learning_rate=1e-3, seed=0)
        table = cross_eval(sets, sets, config)
        assert np.array(table.nmse).shape == (4, 4)

        nmse = {(train_name, test_name): table.nmse[i][j]
                for i, train_name in enumerate(table.train_names)
                for j, test_name in enumerate(table.test_names)}
        family = {"a": "a", "g_a": "a", "b": "b", "g_b": "b"}
        for train_name in table.train_names:
            matched = [nmse[train_name, t] for t in table.test_names if family[t] == family[train_name]]
            mismatched = [nmse[train_name, t] for t in table.test_names if family[t] != family[train_name]]
            assert max(matched) < min(mismatched)
