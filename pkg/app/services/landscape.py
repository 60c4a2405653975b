"""Loss surfaces of the single-path geometric model over (theta_a, theta_d)

The surface value at a grid point is the squared Frobenius distance between a
reference channel and the unit-gain single-path channel at those angles. The
expansion ||H_ref||^2 + ||H||^2 - 2 Re<H_ref, H> with ||H|| = 1 evaluates the
whole grid with two matrix products.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.core.errors import InvalidInputError
from app.core.linalg import frobenius_norm
from app.core.ppgc import array_responses, synthesize_channel
from app.models.schemas import ArrayConfig, GradientBin, PathParams, SurfaceSummary
from app.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_GRID = 256
DEFAULT_RANGE = (-math.pi / 2, math.pi / 2)
DEFAULT_BINS = 8


@dataclass
class LossSurface:
    """values[a, d] is the loss at (theta_a_axis[a], theta_d_axis[d])"""
    reference: PathParams
    array: ArrayConfig
    theta_a_axis: np.ndarray
    theta_d_axis: np.ndarray
    values: np.ndarray

    @property
    def grid_size(self) -> int:
        return self.values.shape[0]


def _axis(grid_size: int, theta_range: Tuple[float, float], reference: float) -> np.ndarray:
    """Uniform axis with the point nearest ``reference`` moved onto it"""
    axis = np.linspace(theta_range[0], theta_range[1], grid_size)
    if theta_range[0] <= reference <= theta_range[1]:
        axis[int(np.argmin(np.abs(axis - reference)))] = reference
    return axis


def compute_surface(
    reference: PathParams,
    array: ArrayConfig,
    grid_size: int = DEFAULT_GRID,
    theta_range: Tuple[float, float] = DEFAULT_RANGE,
) -> LossSurface:
    """Dense single-path loss surface around a reference path"""
    if grid_size < 3:
        raise InvalidInputError(f"grid_size must be at least 3, got {grid_size}")
    if not theta_range[0] < theta_range[1]:
        raise InvalidInputError(f"invalid angle range {theta_range}")

    theta_a = _axis(grid_size, theta_range, reference.theta_a)
    theta_d = _axis(grid_size, theta_range, reference.theta_d)
    h_ref = synthesize_channel([reference], array)

    a_r = array_responses(theta_a, array.n_r, array.u)
    a_t = array_responses(theta_d, array.n_t, array.u)
    # <H_ref, H(a, d)> = a_r(a)^T conj(H_ref) conj(a_t(d))
    inner = a_r @ np.conj(h_ref) @ np.conj(a_t).T
    values = frobenius_norm(h_ref) ** 2 + 1.0 - 2.0 * inner.real
    values = np.maximum(values, 0.0)

    logger.debug(f"Computed {grid_size}x{grid_size} surface for {array.n_r}x{array.n_t} arrays")
    return LossSurface(reference=reference, array=array, theta_a_axis=theta_a, theta_d_axis=theta_d, values=values)


def count_strict_local_minima(surface: LossSurface) -> int:
    """Interior points strictly below all eight neighbours"""
    v = surface.values
    if min(v.shape) < 3:
        raise InvalidInputError("surface must be at least 3x3")
    center = v[1:-1, 1:-1]
    rows, cols = v.shape
    is_min = np.ones_like(center, dtype=bool)
    for da in (-1, 0, 1):
        for dd in (-1, 0, 1):
            if da == 0 and dd == 0:
                continue
            neighbour = v[1 + da:rows - 1 + da, 1 + dd:cols - 1 + dd]
            is_min &= center < neighbour
    return int(is_min.sum())


def gradient_magnitude_stats(
    surface: LossSurface,
    distance_bins: Union[int, Sequence[float]] = DEFAULT_BINS,
) -> List[GradientBin]:
    """Mean central-difference gradient magnitude per band of distance to the reference angles

    Magnitudes are divided by the peak loss so surfaces of different array
    sizes compare on one scale. An integer ``distance_bins`` splits
    [0, max distance] evenly; a sequence gives the bin edges.
    """
    grad_a, grad_d = np.gradient(surface.values, surface.theta_a_axis, surface.theta_d_axis)
    peak = float(surface.values.max())
    magnitude = np.hypot(grad_a, grad_d) / (peak if peak > 0 else 1.0)

    da = surface.theta_a_axis[:, None] - surface.reference.theta_a
    dd = surface.theta_d_axis[None, :] - surface.reference.theta_d
    distance = np.hypot(da, dd)

    if isinstance(distance_bins, int):
        if distance_bins < 1:
            raise InvalidInputError("distance_bins must be positive")
        edges = np.linspace(0.0, float(distance.max()), distance_bins + 1)
    else:
        edges = np.asarray(distance_bins, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise InvalidInputError("bin edges must be a strictly increasing sequence")

    bins = []
    last = len(edges) - 2
    for k, (lower, upper) in enumerate(zip(edges[:-1], edges[1:])):
        inside = (distance >= lower) & ((distance <= upper) if k == last else (distance < upper))
        count = int(inside.sum())
        mean = float(magnitude[inside].mean()) if count else 0.0
        bins.append(GradientBin(lower=float(lower), upper=float(upper), mean_gradient=mean, count=count))
    return bins


def summarize(surface: LossSurface, distance_bins: Union[int, Sequence[float]] = DEFAULT_BINS) -> SurfaceSummary:
    return SurfaceSummary(
        antennas=surface.array.n_r,
        grid=surface.grid_size,
        minima_count=count_strict_local_minima(surface),
        gradient_bins=gradient_magnitude_stats(surface, distance_bins),
    )


def antenna_sweep(
    antennas: Sequence[int],
    reference: PathParams,
    grid_size: int = DEFAULT_GRID,
    theta_range: Tuple[float, float] = DEFAULT_RANGE,
    distance_bins: Union[int, Sequence[float]] = DEFAULT_BINS,
) -> List[Tuple[LossSurface, SurfaceSummary]]:
    """One surface per square array size N_r = N_t = n"""
    results = []
    for n in antennas:
        surface = compute_surface(reference, ArrayConfig(n_r=n, n_t=n), grid_size, theta_range)
        summary = summarize(surface, distance_bins)
        logger.info(f"N={n}: {summary.minima_count} strict local minima on a {grid_size}x{grid_size} grid")
        results.append((surface, summary))
    return results
