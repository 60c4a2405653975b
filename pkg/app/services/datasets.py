"""Channel datasets: scenario sampling, generation, normalization, splitting and CHM1 I/O

CHM1 layout (little-endian)::

    b"CHM1" | u32 version=1 | u32 count | u32 n_r | u32 n_t | f64 scale
    | count * n_r * n_t complex64 entries (interleaved float32 real, imag),
      sample-major then row-major

Stored samples are normalized channels; multiplying by ``scale`` restores the
original units. Ground-truth path parameters, when known, go to the JSON
sidecar ``<name>.params.json``.
"""

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import DatasetFormatError, FormatIssue, InvalidInputError, ShapeMismatchError
from app.core.ppgc import synthesize_channel
from app.models.schemas import ArrayConfig, PathParams, ScenarioSpec
from app.utils.logger import get_logger
from app.utils.rng import Stream, derive_rng

logger = get_logger(__name__)

MAGIC = b"CHM1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIIId")
SIDECAR_SUFFIX = ".params.json"

PathLike = Union[str, Path]


@dataclass
class ChannelDataset:
    """A set of n_r x n_t channels sharing one array configuration"""
    array: ArrayConfig
    samples: np.ndarray
    params: Optional[List[List[PathParams]]] = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.size == 0:
            samples = samples.reshape(0, self.array.n_r, self.array.n_t)
        expected = (self.array.n_r, self.array.n_t)
        if samples.ndim != 3 or samples.shape[1:] != expected:
            raise ShapeMismatchError("dataset samples", ("count", *expected), samples.shape)
        if self.params is not None and len(self.params) != samples.shape[0]:
            raise ShapeMismatchError("dataset parameters", (samples.shape[0],), (len(self.params),))
        self.samples = samples

    def __len__(self) -> int:
        return self.samples.shape[0]

    def subset(self, indices: Sequence[int]) -> "ChannelDataset":
        indices = np.asarray(indices, dtype=np.intp)
        params = None if self.params is None else [self.params[i] for i in indices]
        return replace(self, samples=self.samples[indices], params=params)


def sample_params(spec: ScenarioSpec, rng: np.random.Generator) -> List[PathParams]:
    """Draw one PathParams per path descriptor, each component uniform in its range"""
    paths = []
    for path in spec.paths:
        gain = rng.uniform(*path.gain_range)
        theta_a = rng.uniform(*path.theta_a_range)
        theta_d = rng.uniform(*path.theta_d_range)
        paths.append(PathParams(gain=gain, theta_a=theta_a, theta_d=theta_d))
    return paths


def generate_dataset(spec: ScenarioSpec, count: int) -> ChannelDataset:
    """Synthesize ``count`` channels; sample i uses the stream (seed, i)"""
    if count < 1:
        raise InvalidInputError(f"count must be at least 1, got {count}")
    samples = np.empty((count, spec.array.n_r, spec.array.n_t), dtype=np.complex128)
    params: List[List[PathParams]] = []
    for index in range(count):
        drawn = sample_params(spec, derive_rng(spec.seed, Stream.DATASET_SAMPLE, index))
        samples[index] = synthesize_channel(drawn, spec.array)
        params.append(drawn)
    logger.info(
        f"Generated {count} channels ({len(spec.paths)} paths, "
        f"{spec.array.n_r}x{spec.array.n_t}, seed={spec.seed})"
    )
    return ChannelDataset(array=spec.array, samples=samples, params=params)


def split(ds: ChannelDataset, train_fraction: float, seed: int = 0) -> Tuple[ChannelDataset, ChannelDataset]:
    """Shuffled split into floor(N*f) training and N - floor(N*f) test samples"""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    order = derive_rng(seed, Stream.SPLIT).permutation(len(ds))
    cut = int(np.floor(len(ds) * train_fraction))
    return ds.subset(np.sort(order[:cut])), ds.subset(np.sort(order[cut:]))


def normalize(ds: ChannelDataset) -> ChannelDataset:
    """Divide by c = sqrt(mean ||H||_F^2); the recorded scale accumulates c"""
    if len(ds) == 0:
        raise InvalidInputError("cannot normalize an empty dataset")
    power = mean_power(ds)
    if power == 0.0:
        raise InvalidInputError("cannot normalize an all-zero dataset")
    c = float(np.sqrt(power))
    return replace(ds, samples=ds.samples / c, scale=ds.scale * c)


def denormalize(ds: ChannelDataset) -> ChannelDataset:
    """Undo normalize(): samples back in original units, scale reset to 1"""
    return replace(ds, samples=ds.samples * ds.scale, scale=1.0)


def mean_power(ds: ChannelDataset) -> float:
    """Mean squared Frobenius norm per sample; 0 for an empty set"""
    if len(ds) == 0:
        return 0.0
    return float(np.mean(np.sum(np.abs(ds.samples) ** 2, axis=(1, 2))))


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + SIDECAR_SUFFIX)


def write_dataset(ds: ChannelDataset, path: PathLike) -> List[Path]:
    """Write the CHM1 file (and the parameter sidecar when known); returns written paths"""
    path = Path(path)
    header = HEADER.pack(MAGIC, FORMAT_VERSION, len(ds), ds.array.n_r, ds.array.n_t, float(ds.scale))
    payload = np.ascontiguousarray(ds.samples, dtype="<c8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
    written = [path]

    if ds.params is not None:
        side = sidecar_path(path)
        records = [[p.model_dump(exclude_defaults=True) for p in sample] for sample in ds.params]
        side.write_text(json.dumps(records))
        written.append(side)

    logger.info(f"Wrote {len(ds)} channels to {path}")
    return written


def read_dataset(path: PathLike, array: Optional[ArrayConfig] = None) -> ChannelDataset:
    """Read a CHM1 file; ``array`` supplies the phase constant and, if given, the expected shape"""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError(FormatIssue.BAD_MAGIC, path)
    if len(data) < HEADER.size:
        raise DatasetFormatError(FormatIssue.TRUNCATED_HEADER, path, f"{len(data)} of {HEADER.size} bytes")

    _, version, count, n_r, n_t, scale = HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(FormatIssue.UNSUPPORTED_VERSION, path, f"version {version}")
    if n_r == 0 or n_t == 0:
        raise DatasetFormatError(FormatIssue.SHAPE_MISMATCH, path, f"antenna counts {n_r}x{n_t}")
    if array is not None and (array.n_r, array.n_t) != (n_r, n_t):
        raise DatasetFormatError(
            FormatIssue.SHAPE_MISMATCH, path, f"expected {array.n_r}x{array.n_t}, file has {n_r}x{n_t}"
        )

    expected_bytes = count * n_r * n_t * 8
    payload = data[HEADER.size:]
    if len(payload) < expected_bytes:
        raise DatasetFormatError(
            FormatIssue.TRUNCATED_PAYLOAD, path, f"{len(payload)} of {expected_bytes} bytes"
        )
    if len(payload) > expected_bytes:
        raise DatasetFormatError(
            FormatIssue.SHAPE_MISMATCH, path, f"{len(payload) - expected_bytes} trailing bytes"
        )

    samples = np.frombuffer(payload, dtype="<c8").astype(np.complex128).reshape(count, n_r, n_t)
    array = array or ArrayConfig(n_r=n_r, n_t=n_t)
    params = _read_sidecar(sidecar_path(path), count)
    return ChannelDataset(array=array, samples=samples, params=params, scale=scale)


def _read_sidecar(path: Path, count: int) -> Optional[List[List[PathParams]]]:
    if not path.exists():
        return None
    try:
        records = json.loads(path.read_text())
        params = [[PathParams(**p) for p in sample] for sample in records]
    except (json.JSONDecodeError, TypeError, ValidationError) as e:
        raise DatasetFormatError(FormatIssue.SHAPE_MISMATCH, path, f"unreadable sidecar: {e}") from e
    if len(params) != count:
        raise DatasetFormatError(FormatIssue.SHAPE_MISMATCH, path, f"{len(params)} entries for {count} samples")
    return params


def load_scenario(path: PathLike) -> ScenarioSpec:
    """Parse and validate a scenario JSON file"""
    return ScenarioSpec.model_validate_json(Path(path).read_text())
