"""Channel-compression harness for cross-evaluating real and generated datasets

A dense autoencoder squeezes the channel planes into ``code_dim`` numbers
and reconstructs them. One compressor is trained per training set and each is
scored on every test set.
"""

import math
from typing import Dict, List

import numpy as np

from app.core import autograd as ag
from app.core.autograd import MLP, Adam, Tape, Tensor
from app.core.errors import InvalidInputError, NumericalError, ShapeMismatchError
from app.core.ppgc import channels_to_planes, planes_to_channels
from app.models.schemas import ArrayConfig, CompressorConfig, CrossEvalTable
from app.services.datasets import ChannelDataset, normalize
from app.services.metrics import mean_nmse
from app.utils.artifacts import Checkpoint
from app.utils.logger import get_logger
from app.utils.rng import Stream, derive_rng

logger = get_logger(__name__)

CHECKPOINT_KIND = "compressor"


class ChannelCompressor:
    """Encoder to a code of length code_dim and a mirrored decoder"""

    def __init__(self, config: CompressorConfig, array: ArrayConfig, rng: np.random.Generator):
        self.config = config
        self.array = array
        self.input_dim = 2 * array.n_r * array.n_t
        if config.code_dim >= self.input_dim:
            raise InvalidInputError(
                f"code_dim {config.code_dim} does not compress {self.input_dim}-dimensional channels"
            )
        hidden = list(config.hidden)
        self.encoder = MLP([self.input_dim, *hidden, config.code_dim], rng, name="encoder")
        self.decoder = MLP([config.code_dim, *reversed(hidden), self.input_dim], rng, name="decoder")

    def parameters(self) -> List[Tensor]:
        return self.encoder.parameters() + self.decoder.parameters()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name: p.values.copy() for p in self.parameters()}

    def load_state_dict(self, tensors: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if [p.name for p in params] != list(tensors):
            raise InvalidInputError("checkpoint tensors do not match the compressor layout")
        for p in params:
            if tensors[p.name].shape != p.shape:
                raise ShapeMismatchError(p.name, p.shape, tensors[p.name].shape)
            p.values[...] = tensors[p.name]

    def encode(self, rows: ag.ArrayLike) -> Tensor:
        return self.encoder(rows)

    def decode(self, code: ag.ArrayLike) -> Tensor:
        return self.decoder(code)

    def loss(self, rows: np.ndarray) -> Tensor:
        recon = self.decode(self.encode(rows))
        return ag.scale(ag.sum(ag.square(ag.sub(recon, rows))), 1.0 / rows.shape[0])


def _check_array(ds: ChannelDataset, array: ArrayConfig, what: str) -> None:
    if (ds.array.n_r, ds.array.n_t) != (array.n_r, array.n_t):
        raise ShapeMismatchError(what, (array.n_r, array.n_t), (ds.array.n_r, ds.array.n_t))


def load_compressor(ckpt: Checkpoint) -> ChannelCompressor:
    if ckpt.kind != CHECKPOINT_KIND:
        raise InvalidInputError(f"expected a {CHECKPOINT_KIND} checkpoint, got {ckpt.kind!r}")
    config = CompressorConfig.model_validate(ckpt.config)
    array = ArrayConfig.model_validate(ckpt.extra.get("array", {}))
    model = ChannelCompressor(config, array, derive_rng(config.seed, Stream.MODEL_INIT))
    model.load_state_dict(ckpt.tensors)
    return model


def reconstruct_channels(ckpt: Checkpoint, dataset: ChannelDataset) -> ChannelDataset:
    """decode(encode(H)) for every channel, in original units"""
    model = load_compressor(ckpt)
    _check_array(dataset, model.array, "test set vs compressor")
    rows = channels_to_planes(dataset.samples * (dataset.scale / ckpt.scale))
    recon = model.decode(model.encode(rows)).values
    samples = planes_to_channels(recon, model.array.n_r, model.array.n_t) * ckpt.scale
    return ChannelDataset(array=model.array, samples=samples)


def eval_nmse(ckpt: Checkpoint, test_set: ChannelDataset) -> float:
    """Mean per-channel NMSE of the compress/decompress round trip"""
    return mean_nmse(test_set, reconstruct_channels(ckpt, test_set))


def train_compressor(train_set: ChannelDataset, config: CompressorConfig) -> Checkpoint:
    if len(train_set) == 0:
        raise InvalidInputError("cannot train a compressor on an empty dataset")
    normalized = normalize(train_set)
    rows = channels_to_planes(normalized.samples)
    model = ChannelCompressor(config, train_set.array, derive_rng(config.seed, Stream.MODEL_INIT))
    optimizer = Adam(model.parameters(), lr=config.learning_rate)

    count = len(train_set)
    history: List[float] = []
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, Stream.EPOCH_SHUFFLE, epoch).permutation(count)
        total = 0.0
        for batch, start in enumerate(range(0, count, config.batch_size)):
            indices = order[start:start + config.batch_size]
            with Tape() as tape:
                loss = model.loss(rows[indices])
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"compressor loss became {value} at epoch {epoch + 1}, batch {batch + 1}")
            tape.backward(loss)
            optimizer.step()
            total += value * len(indices)
        history.append(total / count)

    ckpt = Checkpoint(
        kind=CHECKPOINT_KIND,
        config=config.model_dump(mode="json"),
        tensors=model.state_dict(),
        history=history,
        scale=normalized.scale,
        extra={"array": train_set.array.model_dump()},
    )
    ckpt.extra["final_train_nmse"] = eval_nmse(ckpt, train_set)
    logger.info(
        f"Compressor trained on {count} channels: final loss {history[-1]:.6g}, "
        f"train NMSE {ckpt.extra['final_train_nmse']:.6g}"
    )
    return ckpt


def cross_eval(
    train_sets: Dict[str, ChannelDataset],
    test_sets: Dict[str, ChannelDataset],
    config: CompressorConfig,
) -> CrossEvalTable:
    """Train one compressor per training set and score it on every test set"""
    if not train_sets or not test_sets:
        raise InvalidInputError("cross_eval needs at least one training and one test set")
    reference = next(iter(train_sets.values())).array
    for name, ds in [*train_sets.items(), *test_sets.items()]:
        _check_array(ds, reference, f"dataset {name!r}")

    rows = []
    for train_name, train_set in train_sets.items():
        ckpt = train_compressor(train_set, config)
        row = [eval_nmse(ckpt, test_set) for test_set in test_sets.values()]
        logger.info(f"train {train_name}: " + ", ".join(f"{n}={v:.4g}" for n, v in zip(test_sets, row)))
        rows.append(row)

    return CrossEvalTable(train_names=list(train_sets), test_names=list(test_sets), nmse=rows)
