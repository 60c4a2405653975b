"""Pointwise and distributional channel metrics

Distribution metrics embed each channel as its (real plane, imaginary plane)
vector. W2 uses the closed form between Gaussian fits of the two sets; MMD is
the unbiased squared MMD with an RBF kernel whose bandwidth comes from the
median heuristic.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from app.core.errors import InvalidInputError, ShapeMismatchError
from app.core.linalg import clamp_eigenvalues, frobenius_norm, psd_sqrt, symmetric_eigendecomposition
from app.core.ppgc import channels_to_planes, planes_to_channels
from app.models.schemas import MetricName, MetricResult
from app.services.datasets import ChannelDataset
from app.utils.logger import get_logger

logger = get_logger(__name__)

COVARIANCE_EPS = 1e-9
FALLBACK_BANDWIDTH = 1.0


@dataclass
class VectorizedSet:
    """Channels as rows of a (count, dim) real matrix"""
    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2:
            raise InvalidInputError(f"expected a 2-D matrix of rows, got shape {rows.shape}")
        self.rows = rows

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def vectorize(ds: ChannelDataset) -> VectorizedSet:
    """Row i = concat(flatten(Re H_i), flatten(Im H_i))"""
    return VectorizedSet(channels_to_planes(ds.samples))


def devectorize(vs: VectorizedSet, n_r: int, n_t: int) -> np.ndarray:
    return planes_to_channels(vs.rows, n_r, n_t)


def nmse(h: np.ndarray, h_hat: np.ndarray) -> float:
    """||H - H_hat||_F^2 / ||H||_F^2"""
    h, h_hat = np.asarray(h), np.asarray(h_hat)
    if h.shape != h_hat.shape:
        raise ShapeMismatchError("nmse", h.shape, h_hat.shape)
    reference = frobenius_norm(h) ** 2
    if reference == 0.0:
        raise InvalidInputError("nmse is undefined for an all-zero reference channel")
    return frobenius_norm(h - h_hat) ** 2 / reference


def mean_nmse(reference: ChannelDataset, estimate: ChannelDataset) -> float:
    """Mean per-sample NMSE between two aligned datasets, both in original units"""
    if len(reference) != len(estimate):
        raise ShapeMismatchError("mean_nmse sample counts", (len(reference),), (len(estimate),))
    if len(reference) == 0:
        raise InvalidInputError("mean_nmse needs at least one sample")
    truth = reference.samples * reference.scale
    approx = estimate.samples * estimate.scale
    return float(np.mean([nmse(h, h_hat) for h, h_hat in zip(truth, approx)]))


def _check_pair(a: VectorizedSet, b: VectorizedSet, metric: str) -> None:
    if a.count < 2 or b.count < 2:
        raise InvalidInputError(f"{metric} needs at least 2 points per set, got {a.count} and {b.count}")
    if a.dim != b.dim:
        raise ShapeMismatchError(metric, (a.dim,), (b.dim,))


def _regularized_covariance(rows: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.cov(rows, rowvar=False))
    return cov + COVARIANCE_EPS * np.eye(cov.shape[0])


def w2_gaussian(a: VectorizedSet, b: VectorizedSet) -> float:
    """2-Wasserstein distance between Gaussian fits of the two sets"""
    _check_pair(a, b, "w2_gaussian")
    if a is b:
        return 0.0
    mean_term = float(np.sum((a.rows.mean(axis=0) - b.rows.mean(axis=0)) ** 2))
    cov_a = _regularized_covariance(a.rows)
    cov_b = _regularized_covariance(b.rows)

    root_b = psd_sqrt(cov_b)
    inner = root_b @ cov_a @ root_b
    eigenvalues, _ = symmetric_eigendecomposition(0.5 * (inner + inner.T))
    cross = float(np.sum(np.sqrt(clamp_eigenvalues(eigenvalues))))

    squared = mean_term + float(np.trace(cov_a) + np.trace(cov_b)) - 2.0 * cross
    return float(np.sqrt(max(squared, 0.0)))


def _squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(sq, 0.0)


def median_bandwidth(rows: np.ndarray) -> float:
    """sigma^2 = median squared distance over distinct pairs; 1.0 if they all vanish"""
    sq = _squared_distances(rows, rows)
    upper = sq[np.triu_indices(rows.shape[0], k=1)]
    sigma2 = float(np.median(upper)) if upper.size else 0.0
    if sigma2 <= 0.0:
        logger.warning("Degenerate pooled sample; falling back to unit MMD bandwidth")
        return FALLBACK_BANDWIDTH
    return sigma2


def mmd_rbf(a: VectorizedSet, b: VectorizedSet) -> float:
    """Unbiased MMD^2 with k(x, y) = exp(-||x - y||^2 / (2 sigma^2)); may be slightly negative"""
    _check_pair(a, b, "mmd_rbf")
    if a is b:
        return 0.0
    sigma2 = median_bandwidth(np.concatenate([a.rows, b.rows], axis=0))

    def kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.exp(-_squared_distances(x, y) / (2.0 * sigma2))

    k_aa, k_bb, k_ab = kernel(a.rows, a.rows), kernel(b.rows, b.rows), kernel(a.rows, b.rows)
    m, n = a.count, b.count
    xx = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
    yy = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    return float(xx + yy - 2.0 * k_ab.mean())


def compare(a: ChannelDataset, b: ChannelDataset, metrics: List[MetricName]) -> List[MetricResult]:
    """Evaluate the requested metrics between two datasets in original units"""
    va = VectorizedSet(channels_to_planes(a.samples * a.scale))
    vb = va if b is a else VectorizedSet(channels_to_planes(b.samples * b.scale))
    if va.dim != vb.dim:
        raise ShapeMismatchError("compared datasets", (va.dim,), (vb.dim,))

    results = []
    for metric in metrics:
        if metric == MetricName.W2:
            value = w2_gaussian(va, vb)
        elif metric == MetricName.MMD:
            value = mmd_rbf(va, vb)
        else:
            value = mean_nmse(a, b)
        logger.info(f"{metric.value}: {value:.6g} ({va.count} vs {vb.count} samples)")
        results.append(MetricResult(metric=metric, value=value, count_a=va.count, count_b=vb.count, dim=va.dim))
    return results
