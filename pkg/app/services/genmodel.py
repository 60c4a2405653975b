"""Generative channel models

Two pipelines share one encoder design:

* linearized: the decoder emits a gain matrix W over a fixed angle dictionary
  and the channel is the linear synthesis sum_ij W_ij D_ij;
* direct: the decoder emits P (gain, theta_a, theta_d) triples that go
  through the geometric channel model itself.

Channels enter the networks as (real plane, imaginary plane) rows of length
2 * n_r * n_t. Training works on the dataset-normalized channels and every
generated channel is scaled back by the stored normalization factor.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from app.core import autograd as ag
from app.core.autograd import MLP, Adam, Dense, Tape, Tensor
from app.core.errors import InvalidInputError, NumericalError, ShapeMismatchError
from app.core.ppgc import (
    Dictionary,
    GainMatrix,
    channels_to_planes,
    get_dictionary,
    grid_angle,
    planes_to_channels,
    synthesize_batch,
)
from app.models.schemas import ArrayConfig, DictionaryConfig, GenerativeMode, PathParams, ScenarioSpec, VaeConfig
from app.services.datasets import ChannelDataset, normalize
from app.utils.artifacts import Checkpoint
from app.utils.logger import get_logger
from app.utils.rng import Stream, derive_rng

logger = get_logger(__name__)

CHECKPOINT_KIND = "vae"
DEFAULT_THRESHOLD = 0.1


# Losses
def _batch_size(h: ag.ArrayLike) -> int:
    shape = ag.as_tensor(h).shape
    return shape[0] if len(shape) == 2 else 1


def reconstruction_error(h: ag.ArrayLike, h_hat: ag.ArrayLike) -> Tensor:
    """Squared Frobenius error summed over the batch"""
    return ag.sum(ag.square(ag.sub(h_hat, h)))


def loss_direct(h: ag.ArrayLike, h_hat: ag.ArrayLike, mu: Tensor, log_var: Tensor, alpha_d: float) -> Tensor:
    """||H - H_hat||_F^2 + alpha_d * KL, averaged over the batch"""
    total = ag.add(reconstruction_error(h, h_hat), ag.scale(ag.kl_to_standard_normal(mu, log_var), alpha_d))
    return ag.scale(total, 1.0 / _batch_size(h))


def loss_linearized(
    h: ag.ArrayLike,
    h_hat: ag.ArrayLike,
    mu: Tensor,
    log_var: Tensor,
    w: ag.ArrayLike,
    alpha_d: float,
    alpha_s: float,
) -> Tensor:
    """Direct loss plus the alpha_s-weighted L1 norm of the gain matrix"""
    sparsity = ag.scale(ag.sum(ag.absolute(w)), alpha_s / _batch_size(h))
    return ag.add(loss_direct(h, h_hat, mu, log_var, alpha_d), sparsity)


# Model
class ChannelVAE:
    """Encoder, latent heads and a mode-specific decoder"""

    def __init__(self, config: VaeConfig, array: ArrayConfig, rng: np.random.Generator):
        self.config = config
        self.array = array
        self.input_dim = 2 * array.n_r * array.n_t
        hidden = list(config.hidden)

        self.encoder = MLP([self.input_dim, *hidden], rng, name="encoder", activate_last=True)
        self.mu_head = Dense(hidden[-1], config.latent_dim, rng, name="mu_head")
        self.log_var_head = Dense(hidden[-1], config.latent_dim, rng, name="log_var_head")
        self.decoder = MLP([config.latent_dim, *reversed(hidden)], rng, name="decoder", activate_last=True)

        if config.mode == GenerativeMode.LINEARIZED:
            self.dictionary: Optional[Dictionary] = get_dictionary(config.dictionary_config(array))
            planes = 2 if config.complex_gains else 1
            self.gain_head = Dense(hidden[0], planes * config.resolution ** 2, rng, name="gain_head")
            self.heads = [self.gain_head]
        else:
            self.dictionary = None
            self.gain_head = Dense(hidden[0], config.paths, rng, name="gain_head")
            self.theta_a_head = Dense(hidden[0], config.paths, rng, name="theta_a_head")
            self.theta_d_head = Dense(hidden[0], config.paths, rng, name="theta_d_head")
            self.heads = [self.gain_head, self.theta_a_head, self.theta_d_head]
            self._build_phase_constants()

    @property
    def mode(self) -> GenerativeMode:
        return self.config.mode

    def parameters(self) -> List[Tensor]:
        params = self.encoder.parameters() + self.mu_head.parameters() + self.log_var_head.parameters()
        params += self.decoder.parameters()
        for head in self.heads:
            params += head.parameters()
        return params

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name: p.values.copy() for p in self.parameters()}

    def load_state_dict(self, tensors: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        expected = [p.name for p in params]
        if list(tensors) != expected:
            raise InvalidInputError(f"checkpoint tensors {list(tensors)} do not match model layout {expected}")
        for p in params:
            if tensors[p.name].shape != p.shape:
                raise ShapeMismatchError(p.name, p.shape, tensors[p.name].shape)
            p.values[...] = tensors[p.name]

    # Encoder
    def encode(self, rows: ag.ArrayLike) -> Tuple[Tensor, Tensor]:
        """(mu, log_var) for a (batch, 2*n_r*n_t) block of channel planes"""
        rows = ag.as_tensor(rows)
        if rows.values.ndim != 2 or rows.shape[1] != self.input_dim:
            raise ShapeMismatchError("encoder input", ("batch", self.input_dim), rows.shape)
        hidden = self.encoder(rows)
        return self.mu_head(hidden), self.log_var_head(hidden)

    def encode_channels(self, channels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        channels = np.asarray(channels)
        if channels.ndim == 2:
            channels = channels[None]
        if channels.shape[1:] != (self.array.n_r, self.array.n_t):
            raise ShapeMismatchError("channel", (self.array.n_r, self.array.n_t), channels.shape[1:])
        mu, log_var = self.encode(channels_to_planes(channels))
        return mu.values, log_var.values

    # Linearized decoder
    def decode_gains(self, z: ag.ArrayLike) -> Tensor:
        """Flattened gain planes, shape (batch, R^2) or (batch, 2 R^2) with complex gains"""
        return self.gain_head(self.decoder(z))

    def gains_to_planes(self, gains: Tensor) -> Tensor:
        synthesis = self.dictionary.synthesis_matrix(self.config.complex_gains)
        return ag.matmul(gains, synthesis)

    def gain_matrices(self, gains: np.ndarray, scale: float = 1.0) -> List[GainMatrix]:
        r = self.config.resolution
        gains = np.asarray(gains) * scale
        if self.config.complex_gains:
            weights = gains[:, : r * r] + 1j * gains[:, r * r:]
        else:
            weights = gains
        return [GainMatrix(w.reshape(r, r)) for w in weights]

    # Direct decoder
    def _build_phase_constants(self) -> None:
        n_r, n_t = self.array.n_r, self.array.n_t
        r_index, t_index = np.divmod(np.arange(n_r * n_t), n_t)
        self._r_index = r_index.astype(np.float64).reshape(1, 1, -1)
        self._t_index = t_index.astype(np.float64).reshape(1, 1, -1)
        self._amplitude = 1.0 / math.sqrt(n_r * n_t)

    def decode_params(self, z: ag.ArrayLike) -> Tuple[Tensor, Tensor, Tensor]:
        """(gains, theta_a, theta_d), each (batch, P); angles squashed by pi * tanh"""
        hidden = self.decoder(z)
        gains = self.gain_head(hidden)
        theta_a = ag.scale(ag.tanh(self.theta_a_head(hidden)), math.pi)
        theta_d = ag.scale(ag.tanh(self.theta_d_head(hidden)), math.pi)
        return gains, theta_a, theta_d

    def params_to_planes(self, gains: Tensor, theta_a: Tensor, theta_d: Tensor) -> Tensor:
        """Differentiable geometric synthesis, output (batch, 2*n_r*n_t)"""
        batch, paths = gains.shape
        sin_a = ag.reshape(ag.sin(theta_a), (batch, paths, 1))
        sin_d = ag.reshape(ag.sin(theta_d), (batch, paths, 1))
        phase = ag.scale(ag.sub(ag.multiply(sin_a, self._r_index), ag.multiply(sin_d, self._t_index)), self.array.u)
        amplitude = ag.scale(ag.reshape(gains, (batch, paths, 1)), self._amplitude)
        real = ag.sum(ag.multiply(amplitude, ag.cos(phase)), axis=1)
        imag = ag.sum(ag.multiply(amplitude, ag.sin(phase)), axis=1)
        return ag.concatenate([real, imag], axis=1)

    # Full pass
    def reconstruct_planes(self, z: ag.ArrayLike) -> Tuple[Tensor, Optional[Tensor]]:
        """Channel planes for a latent batch, plus the gain planes in linearized mode"""
        if self.mode == GenerativeMode.LINEARIZED:
            gains = self.decode_gains(z)
            return self.gains_to_planes(gains), gains
        return self.params_to_planes(*self.decode_params(z)), None

    def loss(self, rows: np.ndarray, noise: np.ndarray) -> Tensor:
        mu, log_var = self.encode(rows)
        z = ag.reparameterize(mu, log_var, noise)
        h_hat, gains = self.reconstruct_planes(z)
        if gains is not None:
            return loss_linearized(rows, h_hat, mu, log_var, gains, self.config.alpha_d, self.config.alpha_s)
        return loss_direct(rows, h_hat, mu, log_var, self.config.alpha_d)


@dataclass
class SampledChannels:
    """Generated channels in original units, with the gain matrices of linearized models"""
    dataset: ChannelDataset
    gains: Optional[List[GainMatrix]] = None


def _training_noise(seed: int, epoch: int, batch: int, indices: Sequence[int], latent_dim: int) -> np.ndarray:
    return np.stack([
        derive_rng(seed, Stream.TRAINING_NOISE, epoch, batch, int(i)).standard_normal(latent_dim)
        for i in indices
    ])


def train(dataset: ChannelDataset, config: VaeConfig, progress: bool = False) -> Checkpoint:
    """Fit a ChannelVAE to ``dataset`` with Adam; deterministic for a given seed"""
    if len(dataset) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    normalized = normalize(dataset)
    rows = channels_to_planes(normalized.samples)
    model = ChannelVAE(config, dataset.array, derive_rng(config.seed, Stream.MODEL_INIT))
    optimizer = Adam(model.parameters(), lr=config.learning_rate)

    count = len(dataset)
    history: List[float] = []
    logger.info(
        f"Training {config.mode.value} model on {count} channels "
        f"({config.epochs} epochs, batch {config.batch_size}, scale {normalized.scale:.4g})"
    )
    epochs = tqdm(range(config.epochs), desc="train", unit="epoch", disable=not progress)
    for epoch in epochs:
        order = derive_rng(config.seed, Stream.EPOCH_SHUFFLE, epoch).permutation(count)
        total = 0.0
        for batch, start in enumerate(range(0, count, config.batch_size)):
            indices = order[start:start + config.batch_size]
            noise = _training_noise(config.seed, epoch, batch, indices, config.latent_dim)
            with Tape() as tape:
                loss = model.loss(rows[indices], noise)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"loss became {value} at epoch {epoch + 1}, batch {batch + 1}")
            tape.backward(loss)
            optimizer.step()
            total += value * len(indices)
            logger.debug(f"epoch {epoch + 1} batch {batch + 1}: loss {value:.6g}")

        history.append(total / count)
        if (epoch + 1) % config.log_every == 0 or epoch + 1 == config.epochs:
            logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean loss {history[-1]:.6g}")

    return Checkpoint(
        kind=CHECKPOINT_KIND,
        config=config.model_dump(mode="json"),
        tensors=model.state_dict(),
        history=history,
        scale=normalized.scale,
        extra={"array": dataset.array.model_dump()},
    )


def load_model(ckpt: Checkpoint) -> Tuple[ChannelVAE, VaeConfig, ArrayConfig]:
    """Rebuild the network described by a checkpoint"""
    if ckpt.kind != CHECKPOINT_KIND:
        raise InvalidInputError(f"expected a {CHECKPOINT_KIND} checkpoint, got {ckpt.kind!r}")
    config = VaeConfig.model_validate(ckpt.config)
    array = ArrayConfig.model_validate(ckpt.extra.get("array", {}))
    model = ChannelVAE(config, array, derive_rng(config.seed, Stream.MODEL_INIT))
    model.load_state_dict(ckpt.tensors)
    return model, config, array


def _empty(array: ArrayConfig) -> ChannelDataset:
    return ChannelDataset(array=array, samples=np.zeros((0, array.n_r, array.n_t), dtype=np.complex128))


def sample_channels(ckpt: Checkpoint, count: int, seed: int) -> SampledChannels:
    """Decode ``count`` latents z ~ N(0, I) into channels in original units"""
    if count < 0:
        raise InvalidInputError(f"count must be non-negative, got {count}")
    model, config, array = load_model(ckpt)
    if count == 0:
        empty = _empty(array)
        if config.mode == GenerativeMode.DIRECT:
            empty.params = []
            return SampledChannels(empty)
        return SampledChannels(empty, gains=[])

    z = derive_rng(seed, Stream.LATENT_SAMPLE).standard_normal((count, config.latent_dim))
    if config.mode == GenerativeMode.LINEARIZED:
        matrices = model.gain_matrices(model.decode_gains(z).values, scale=ckpt.scale)
        weights = np.stack([w.weights for w in matrices])
        samples = np.tensordot(weights, model.dictionary.atoms, axes=([1, 2], [0, 1]))
        logger.info(f"Sampled {count} channels from the linearized model")
        return SampledChannels(ChannelDataset(array=array, samples=samples), gains=matrices)

    gains, theta_a, theta_d = (t.values for t in model.decode_params(z))
    gains = gains * ckpt.scale
    samples = synthesize_batch(gains, theta_a, theta_d, array)
    params = [
        [PathParams(gain=g, theta_a=a, theta_d=d) for g, a, d in zip(gains[i], theta_a[i], theta_d[i])]
        for i in range(count)
    ]
    logger.info(f"Sampled {count} channels from the direct model")
    return SampledChannels(ChannelDataset(array=array, samples=samples, params=params))


def reconstruct(ckpt: Checkpoint, dataset: ChannelDataset) -> ChannelDataset:
    """Posterior-mean reconstruction (z = mu) of every channel, in original units"""
    model, _, array = load_model(ckpt)
    if (dataset.array.n_r, dataset.array.n_t) != (array.n_r, array.n_t):
        raise ShapeMismatchError("dataset vs model", (array.n_r, array.n_t), (dataset.array.n_r, dataset.array.n_t))
    if len(dataset) == 0:
        return _empty(array)
    rows = channels_to_planes(dataset.samples * (dataset.scale / ckpt.scale))
    mu, _ = model.encode(rows)
    planes, _ = model.reconstruct_planes(mu)
    samples = planes_to_channels(planes.values, array.n_r, array.n_t) * ckpt.scale
    return ChannelDataset(array=array, samples=samples)


def extract_params(w: GainMatrix, dict_config: DictionaryConfig, threshold: float = DEFAULT_THRESHOLD) -> List[PathParams]:
    """Paths for every |W_ij| > threshold * max|W|, strongest first

    Complex weights give gain |W_ij| and phase arg(W_ij).
    """
    if threshold < 0:
        raise InvalidInputError(f"threshold must be non-negative, got {threshold}")
    if w.resolution != dict_config.resolution:
        raise ShapeMismatchError("gain matrix vs dictionary", (dict_config.resolution,) * 2, w.weights.shape)
    magnitudes = np.abs(w.weights)
    peak = float(magnitudes.max()) if magnitudes.size else 0.0
    if peak == 0.0:
        return []

    flat = magnitudes.ravel()
    candidates = np.flatnonzero(flat > threshold * peak)
    candidates = candidates[np.argsort(-flat[candidates], kind="stable")]
    paths = []
    for index in candidates:
        i, j = divmod(int(index), w.resolution)
        value = w.weights[i, j]
        if w.is_complex:
            gain, phase = float(abs(value)), float(np.angle(value))
        else:
            gain, phase = float(value), 0.0
        paths.append(PathParams(
            gain=gain,
            theta_a=grid_angle(i + 1, dict_config),
            theta_d=grid_angle(j + 1, dict_config),
            phase=phase,
        ))
    return paths


def extract_from_checkpoint(ckpt: Checkpoint, count: int, seed: int, threshold: float = DEFAULT_THRESHOLD) -> List[List[PathParams]]:
    """Per-sample paths of ``count`` generated channels

    Linearized models are thresholded on their gain matrices; direct models
    emit their decoded parameters as they are.
    """
    sampled = sample_channels(ckpt, count, seed)
    if sampled.gains is None:
        return sampled.dataset.params or []
    config = VaeConfig.model_validate(ckpt.config)
    array = ArrayConfig.model_validate(ckpt.extra.get("array", {}))
    dict_config = config.dictionary_config(array)
    return [extract_params(w, dict_config, threshold) for w in sampled.gains]


def evaluate_recovery(extracted: Sequence[Sequence[PathParams]], spec: ScenarioSpec) -> float:
    """Fraction of samples whose strongest path lies inside one of the true angle rectangles"""
    if not extracted:
        raise InvalidInputError("no extracted samples to evaluate")
    hits = 0
    for paths in extracted:
        if not paths:
            continue
        dominant = paths[0]
        if any(
            r.theta_a_range[0] <= dominant.theta_a <= r.theta_a_range[1]
            and r.theta_d_range[0] <= dominant.theta_d <= r.theta_d_range[1]
            for r in spec.paths
        ):
            hits += 1
    return hits / len(extracted)
