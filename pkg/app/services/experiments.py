"""Experiment sweeps over dataset size, dictionary resolution / array size and path count

Every sweep trains a fresh generative model per configuration, samples from
it and scores the samples against held-out channels with W2 and MMD.
"""

from typing import List, Optional, Sequence

import numpy as np

from app.core.errors import InvalidInputError
from app.models.schemas import ArrayConfig, GenerativeMode, ScenarioSpec, SweepKind, SweepRow, VaeConfig
from app.services import genmodel
from app.services.datasets import ChannelDataset, generate_dataset, split
from app.services.metrics import mmd_rbf, vectorize, w2_gaussian
from app.utils.artifacts import Checkpoint
from app.utils.logger import get_logger

logger = get_logger(__name__)

TRAIN_FRACTION = 0.8


def _score(ckpt: Checkpoint, test: ChannelDataset, sample_count: Optional[int], seed: int):
    sampled = genmodel.sample_channels(ckpt, sample_count or len(test), seed)
    reference = vectorize(ChannelDataset(array=test.array, samples=test.samples * test.scale))
    generated = vectorize(sampled.dataset)
    return w2_gaussian(generated, reference), mmd_rbf(generated, reference), sampled


def dataset_size_sweep(
    train: ChannelDataset,
    test: ChannelDataset,
    config: VaeConfig,
    fractions: Sequence[float],
    sample_count: Optional[int] = None,
) -> List[SweepRow]:
    """Train on the first floor(N * f) training channels for each fraction f"""
    rows = []
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
        size = int(np.floor(len(train) * fraction))
        if size < 2:
            raise InvalidInputError(f"fraction {fraction} leaves only {size} training channels")
        ckpt = genmodel.train(train.subset(range(size)), config)
        w2, mmd, _ = _score(ckpt, test, sample_count, config.seed)
        row = SweepRow(
            kind=SweepKind.DATASET_SIZE, antennas=train.array.n_r, resolution=config.resolution,
            train_size=size, fraction=fraction, w2=w2, mmd=mmd,
        )
        logger.info(f"size sweep f={fraction}: W2={w2:.4g} MMD={mmd:.4g}")
        rows.append(row)
    return rows


def resolution_sweep(
    spec: ScenarioSpec,
    resolutions: Sequence[int],
    antennas: Sequence[int],
    count: int,
    config: VaeConfig,
    sample_count: Optional[int] = None,
) -> List[SweepRow]:
    """Linearized model for every (dictionary resolution, square array size) pair"""
    if config.mode != GenerativeMode.LINEARIZED:
        raise InvalidInputError("the resolution sweep needs a linearized configuration")
    rows = []
    for n in antennas:
        scenario = spec.model_copy(update={"array": ArrayConfig(n_r=n, n_t=n, u=spec.array.u)})
        train, test = split(generate_dataset(scenario, count), TRAIN_FRACTION, seed=spec.seed)
        for resolution in resolutions:
            run_config = config.model_copy(update={"resolution": resolution})
            ckpt = genmodel.train(train, run_config)
            w2, mmd, _ = _score(ckpt, test, sample_count, config.seed)
            logger.info(f"resolution sweep N={n} R={resolution}: W2={w2:.4g} MMD={mmd:.4g}")
            rows.append(SweepRow(
                kind=SweepKind.RESOLUTION, antennas=n, resolution=resolution,
                train_size=len(train), w2=w2, mmd=mmd,
            ))
    return rows


def path_count_sweep(
    spec: ScenarioSpec,
    path_counts: Sequence[int],
    count: int,
    config: VaeConfig,
    sample_count: Optional[int] = None,
    threshold: float = genmodel.DEFAULT_THRESHOLD,
) -> List[SweepRow]:
    """Scenarios made of the first P paths; also reports the mean number of extracted paths"""
    rows = []
    for paths in path_counts:
        scenario = spec.truncated(paths)
        run_config = config
        if config.mode == GenerativeMode.DIRECT:
            run_config = config.model_copy(update={"paths": paths})
        train, test = split(generate_dataset(scenario, count), TRAIN_FRACTION, seed=spec.seed)
        ckpt = genmodel.train(train, run_config)
        w2, mmd, sampled = _score(ckpt, test, sample_count, config.seed)

        if sampled.gains is not None:
            dict_config = run_config.dictionary_config(scenario.array)
            extracted = [genmodel.extract_params(w, dict_config, threshold) for w in sampled.gains]
        else:
            extracted = sampled.dataset.params or []
        mean_paths = float(np.mean([len(p) for p in extracted])) if extracted else 0.0

        logger.info(f"path sweep P={paths}: W2={w2:.4g} MMD={mmd:.4g} mean extracted paths {mean_paths:.2f}")
        rows.append(SweepRow(
            kind=SweepKind.PATH_COUNT, antennas=scenario.array.n_r,
            resolution=run_config.resolution if run_config.mode == GenerativeMode.LINEARIZED else None,
            train_size=len(train), paths=paths, w2=w2, mmd=mmd, mean_extracted_paths=mean_paths,
        ))
    return rows
