"""Pydantic models for configuration, results and API I/O"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import InvalidInputError

UINT64_MAX = 2**64 - 1


class GenerativeMode(str, Enum):
    """Which generative pipeline a model uses"""
    DIRECT = "direct"
    LINEARIZED = "linearized"


class MetricName(str, Enum):
    """Distribution / pointwise metrics exposed by the CLI"""
    W2 = "w2"
    MMD = "mmd"
    NMSE = "nmse"


class SweepKind(str, Enum):
    """Experiment sweeps"""
    DATASET_SIZE = "size"
    RESOLUTION = "resolution"
    PATH_COUNT = "paths"


# Channel model
class ArrayConfig(BaseModel):
    """Uniform linear arrays at both ends of the link"""
    model_config = ConfigDict(frozen=True)

    n_t: int = Field(16, ge=1)
    n_r: int = Field(16, ge=1)
    u: float = Field(math.pi, gt=0)  # 2*pi*d/lambda


class PathParams(BaseModel):
    """One propagation path (gain, angle of arrival, angle of departure)"""
    model_config = ConfigDict(frozen=True)

    gain: float = Field(..., allow_inf_nan=False)
    theta_a: float = Field(..., ge=-math.pi, le=math.pi)
    theta_d: float = Field(..., ge=-math.pi, le=math.pi)
    phase: float = Field(0.0, allow_inf_nan=False)


class DictionaryConfig(BaseModel):
    """Angle grid of the array-response dictionary"""
    model_config = ConfigDict(frozen=True)

    resolution: int = Field(64, ge=1)
    theta_min: float = Field(-math.pi / 2, ge=-math.pi, le=math.pi)
    theta_max: float = Field(math.pi / 2, ge=-math.pi, le=math.pi)
    array: ArrayConfig = Field(default_factory=ArrayConfig)

    @model_validator(mode="after")
    def check_range(self) -> "DictionaryConfig":
        if not self.theta_min < self.theta_max:
            raise ValueError(f"theta_min ({self.theta_min}) must be below theta_max ({self.theta_max})")
        return self

    @property
    def delta(self) -> float:
        return (self.theta_max - self.theta_min) / self.resolution


# Datasets
class PathRange(BaseModel):
    """Uniform sampling ranges for one path of a scenario"""
    model_config = ConfigDict(frozen=True)

    theta_a_range: Tuple[float, float]
    theta_d_range: Tuple[float, float]
    gain_range: Tuple[float, float]

    @field_validator("theta_a_range", "theta_d_range", "gain_range")
    @classmethod
    def check_ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not (math.isfinite(low) and math.isfinite(high)):
            raise ValueError("range bounds must be finite")
        if low > high:
            raise ValueError(f"low bound {low} exceeds high bound {high}")
        return value

    @field_validator("theta_a_range", "theta_d_range")
    @classmethod
    def check_angles(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] < -math.pi or value[1] > math.pi:
            raise ValueError("angle ranges must lie inside [-pi, pi]")
        return value


class ScenarioSpec(BaseModel):
    """User-defined channel distribution: one range descriptor per path"""
    paths: List[PathRange] = Field(..., min_length=1)
    array: ArrayConfig = Field(default_factory=ArrayConfig)
    seed: int = Field(0, ge=0, le=UINT64_MAX)

    def truncated(self, path_count: int) -> "ScenarioSpec":
        """Scenario restricted to its first ``path_count`` paths"""
        if not 1 <= path_count <= len(self.paths):
            raise InvalidInputError(f"path_count must be in [1, {len(self.paths)}]")
        return self.model_copy(update={"paths": self.paths[:path_count]})


# Generative model
class VaeConfig(BaseModel):
    """Hyperparameters of either generative pipeline"""
    mode: GenerativeMode = GenerativeMode.LINEARIZED
    latent_dim: int = Field(64, ge=1)
    hidden: List[int] = Field(default_factory=lambda: [512, 256], min_length=1)
    alpha_d: float = Field(1e-3, ge=0)
    alpha_s: float = Field(1e-4, ge=0)
    # linearized mode
    resolution: int = Field(64, ge=1)
    theta_min: float = Field(-math.pi / 2, ge=-math.pi, le=math.pi)
    theta_max: float = Field(math.pi / 2, ge=-math.pi, le=math.pi)
    complex_gains: bool = False
    # direct mode
    paths: Optional[int] = Field(None, ge=1)
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(256, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = Field(0, ge=0, le=UINT64_MAX)
    log_every: int = Field(10, ge=1)

    @field_validator("hidden")
    @classmethod
    def check_hidden(cls, value: List[int]) -> List[int]:
        if any(size < 1 for size in value):
            raise ValueError("hidden layer sizes must be positive")
        return value

    @model_validator(mode="after")
    def check_mode(self) -> "VaeConfig":
        if self.mode == GenerativeMode.DIRECT and self.paths is None:
            raise ValueError("direct mode requires the path count 'paths'")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        return self

    def dictionary_config(self, array: ArrayConfig) -> DictionaryConfig:
        return DictionaryConfig(
            resolution=self.resolution,
            theta_min=self.theta_min,
            theta_max=self.theta_max,
            array=array,
        )


# Compression harness
class CompressorConfig(BaseModel):
    """Dense channel-compression autoencoder"""
    code_dim: int = Field(32, ge=1)
    hidden: List[int] = Field(default_factory=lambda: [256])
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(256, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = Field(0, ge=0, le=UINT64_MAX)


class CrossEvalTable(BaseModel):
    """Mean test NMSE for every (training set, test set) pair"""
    train_names: List[str]
    test_names: List[str]
    nmse: List[List[float]]

    @model_validator(mode="after")
    def check_shape(self) -> "CrossEvalTable":
        if len(self.nmse) != len(self.train_names) or any(
            len(row) != len(self.test_names) for row in self.nmse
        ):
            raise ValueError("nmse matrix must be |train| x |test|")
        if any(value < 0 for row in self.nmse for value in row):
            raise ValueError("nmse entries must be non-negative")
        return self

    def value(self, train_name: str, test_name: str) -> float:
        return self.nmse[self.train_names.index(train_name)][self.test_names.index(test_name)]


# Results
class MetricResult(BaseModel):
    """One metric evaluation between two channel sets"""
    metric: MetricName
    value: float
    count_a: int
    count_b: int
    dim: int


class GradientBin(BaseModel):
    """Mean gradient magnitude for points within a distance band of the minimum"""
    lower: float
    upper: float
    mean_gradient: float
    count: int


class SurfaceSummary(BaseModel):
    """Summary of one loss surface"""
    antennas: int
    grid: int
    minima_count: int
    gradient_bins: List[GradientBin]


class SweepRow(BaseModel):
    """One configuration of an experiment sweep"""
    kind: SweepKind
    antennas: int
    resolution: Optional[int] = None
    train_size: int
    fraction: Optional[float] = None
    paths: Optional[int] = None
    w2: float
    mmd: float
    mean_extracted_paths: Optional[float] = None


class RunManifest(BaseModel):
    """Provenance record written next to every CLI artifact"""
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    version: str
    duration_seconds: float = 0.0


# API models
class ChannelPayload(BaseModel):
    """Complex channel matrix split into real and imaginary parts"""
    real: List[List[float]]
    imag: List[List[float]]


class SynthesizeRequest(BaseModel):
    """PPGC synthesis request"""
    array: ArrayConfig = Field(default_factory=ArrayConfig)
    paths: List[PathParams] = Field(..., min_length=1)


class GainMatrixRequest(BaseModel):
    """A gain matrix over a dictionary grid"""
    dictionary: DictionaryConfig = Field(default_factory=DictionaryConfig)
    weights: List[List[float]]
    imag_weights: Optional[List[List[float]]] = None
    threshold: float = Field(0.1, ge=0)


class ExtractResponse(BaseModel):
    """Paths recovered from a gain matrix"""
    paths: List[PathParams]


class StatusResponse(BaseModel):
    """Service status"""
    status: str
    version: str
    default_array: ArrayConfig
    default_dictionary: DictionaryConfig
