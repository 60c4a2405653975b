"""Parametric physics-based geometric channel model

A channel between ULAs is the superposition of rank-one path components
``g * a_r(theta_a) a_t(theta_d)^H``. The dictionary variant fixes the angles
to a grid and writes the channel as a linear combination of precomputed atoms
weighted by a gain matrix.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from app.core.errors import InvalidInputError, ShapeMismatchError
from app.core.linalg import ComplexMatrix, outer_product
from app.models.schemas import ArrayConfig, DictionaryConfig, PathParams
from app.utils.logger import get_logger

logger = get_logger(__name__)


def array_response(theta: float, n: int, u: float) -> NDArray[np.complex128]:
    """ULA steering vector; element k is exp(j*k*u*sin(theta)) / sqrt(n)"""
    if n < 1:
        raise InvalidInputError(f"antenna count must be positive, got {n}")
    k = np.arange(n)
    return np.exp(1j * k * u * np.sin(theta)) / np.sqrt(n)


def array_responses(thetas: np.ndarray, n: int, u: float) -> NDArray[np.complex128]:
    """Steering vectors for many angles, shape (len(thetas), n)"""
    thetas = np.asarray(thetas, dtype=np.float64)
    k = np.arange(n)
    return np.exp(1j * u * np.sin(thetas)[:, None] * k[None, :]) / np.sqrt(n)


def synthesize_channel(paths: Sequence[PathParams], array: ArrayConfig) -> ComplexMatrix:
    """H = sum_p g_p a_r(theta_a^p) a_t(theta_d^p)^H"""
    if not paths:
        raise InvalidInputError("at least one path is required")
    h = np.zeros((array.n_r, array.n_t), dtype=np.complex128)
    for path in paths:
        gain = path.gain * np.exp(1j * path.phase) if path.phase else path.gain
        h += gain * outer_product(
            array_response(path.theta_a, array.n_r, array.u),
            array_response(path.theta_d, array.n_t, array.u),
        )
    return h


def grid_angle(k: int, config: DictionaryConfig) -> float:
    """theta_k = theta_min + k * delta for bin index k in 1..R"""
    if not 1 <= k <= config.resolution:
        raise InvalidInputError(f"bin index {k} outside 1..{config.resolution}")
    return config.theta_min + k * (config.theta_max - config.theta_min) / config.resolution


def grid_angles(config: DictionaryConfig) -> NDArray[np.float64]:
    """All R grid angles, bin 1 first"""
    k = np.arange(1, config.resolution + 1)
    return config.theta_min + k * (config.theta_max - config.theta_min) / config.resolution


@dataclass
class GainMatrix:
    """R x R weights over the dictionary; rows are arrival bins, columns departure bins

    Array index ``i`` corresponds to grid bin ``i + 1``. Complex weights are
    used only in complex-gain mode.
    """
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise InvalidInputError(f"gain matrix must be square, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("gain matrix contains non-finite entries")

    @property
    def resolution(self) -> int:
        return self.weights.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.weights)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Precomputed atoms D[i, j] = a_r(theta_i) a_t(theta_j)^H, shape (R, R, n_r, n_t)"""
    config: DictionaryConfig
    atoms: NDArray[np.complex128] = field(repr=False)

    @property
    def resolution(self) -> int:
        return self.config.resolution

    def synthesis_matrix(self, complex_gains: bool = False) -> NDArray[np.float64]:
        """Real matrix mapping flattened gains to stacked (real, imag) channel planes

        Real gains: shape (R^2, 2*n_r*n_t). Complex gains take the real plane of
        W followed by its imaginary plane: shape (2*R^2, 2*n_r*n_t).
        """
        return _synthesis_matrix(self, complex_gains)


@lru_cache(maxsize=8)
def _synthesis_matrix(dictionary: Dictionary, complex_gains: bool) -> NDArray[np.float64]:
    r2 = dictionary.resolution ** 2
    flat = dictionary.atoms.reshape(r2, -1)
    real_rows = np.concatenate([flat.real, flat.imag], axis=1)
    if not complex_gains:
        matrix = real_rows
    else:
        imag_rows = np.concatenate([-flat.imag, flat.real], axis=1)
        matrix = np.concatenate([real_rows, imag_rows], axis=0)
    matrix.setflags(write=False)
    return matrix


def build_dictionary(config: DictionaryConfig) -> Dictionary:
    """Precompute all R^2 atoms on the grid theta_min + k * delta, k = 1..R"""
    thetas = grid_angles(config)
    a_r = array_responses(thetas, config.array.n_r, config.array.u)
    a_t = array_responses(thetas, config.array.n_t, config.array.u)
    atoms = np.einsum("ir,jt->ijrt", a_r, np.conj(a_t))
    atoms.setflags(write=False)
    logger.debug(
        f"Built dictionary R={config.resolution} for {config.array.n_r}x{config.array.n_t} arrays"
    )
    return Dictionary(config=config, atoms=atoms)


@lru_cache(maxsize=8)
def get_dictionary(config: DictionaryConfig) -> Dictionary:
    """Cached dictionary for a (hashable, frozen) configuration"""
    return build_dictionary(config)


def synthesize_from_gains(w: GainMatrix, dictionary: Dictionary) -> ComplexMatrix:
    """H = sum_ij W_ij D_ij"""
    if w.resolution != dictionary.resolution:
        raise ShapeMismatchError(
            "gain matrix vs dictionary",
            (dictionary.resolution, dictionary.resolution),
            w.weights.shape,
        )
    return np.tensordot(w.weights, dictionary.atoms, axes=([0, 1], [0, 1]))


def channels_to_planes(channels: np.ndarray) -> NDArray[np.float64]:
    """(count, n_r, n_t) complex -> (count, 2*n_r*n_t) rows of real plane then imag plane"""
    channels = np.asarray(channels)
    flat = channels.reshape(channels.shape[0], -1)
    return np.concatenate([flat.real, flat.imag], axis=1).astype(np.float64)


def planes_to_channels(rows: np.ndarray, n_r: int, n_t: int) -> NDArray[np.complex128]:
    """Inverse of channels_to_planes"""
    rows = np.asarray(rows, dtype=np.float64)
    size = n_r * n_t
    if rows.ndim != 2 or rows.shape[1] != 2 * size:
        raise ShapeMismatchError("channel planes", (rows.shape[0] if rows.ndim else 0, 2 * size), rows.shape)
    return (rows[:, :size] + 1j * rows[:, size:]).reshape(-1, n_r, n_t)


def synthesize_batch(gains: np.ndarray, thetas_a: np.ndarray, thetas_d: np.ndarray, array: ArrayConfig) -> NDArray[np.complex128]:
    """Vectorized PPGC synthesis for (count, P) parameter arrays"""
    gains = np.atleast_2d(np.asarray(gains))
    a_r = array_responses(np.ravel(thetas_a), array.n_r, array.u).reshape(*gains.shape, array.n_r)
    a_t = array_responses(np.ravel(thetas_d), array.n_t, array.u).reshape(*gains.shape, array.n_t)
    return np.einsum("bp,bpr,bpt->brt", gains, a_r, np.conj(a_t))

