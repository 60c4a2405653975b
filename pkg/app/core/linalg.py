"""Dense linear algebra primitives

Complex matrices are ``complex128`` NumPy arrays and real matrices are
``float64`` arrays. The symmetric eigensolver is a cyclic Jacobi method in
round-robin (parallel) ordering: each round rotates n/2 disjoint index pairs
at once, so a full sweep is n-1 vectorized rounds.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ConvergenceError, InvalidInputError, NumericalError
from app.utils.logger import get_logger

logger = get_logger(__name__)

ComplexMatrix = NDArray[np.complex128]
RealMatrix = NDArray[np.float64]

MAX_SWEEPS = 100
OFF_DIAGONAL_TOL = 1e-12
SYMMETRY_TOL = 1e-9
NEGATIVE_EIGEN_TOL = 1e-6


def outer_product(u: np.ndarray, v: np.ndarray) -> ComplexMatrix:
    """u @ v^H for two complex vectors"""
    u = np.asarray(u, dtype=np.complex128).ravel()
    v = np.asarray(v, dtype=np.complex128).ravel()
    if u.size == 0 or v.size == 0:
        raise InvalidInputError("outer_product needs non-empty vectors")
    return np.outer(u, np.conj(v))


def frobenius_norm(a: np.ndarray) -> float:
    """sqrt of the sum of squared magnitudes"""
    a = np.asarray(a)
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


@lru_cache(maxsize=32)
def _round_robin_schedule(n: int) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
    """Pairings (p, q) with p < q covering every index pair once per sweep"""
    players = list(range(n + (n % 2)))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        p_idx, q_idx = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a >= n or b >= n:
                continue  # dummy player when n is odd
            p_idx.append(min(a, b))
            q_idx.append(max(a, b))
        rounds.append((np.array(p_idx, dtype=np.intp), np.array(q_idx, dtype=np.intp)))
        players = [players[0], players[-1], *players[1:-1]]
    return tuple(rounds)


def _off_diagonal_norm(a: RealMatrix) -> float:
    # summed directly; ||A||^2 - ||diag A||^2 cancels to noise near convergence
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.sum(off * off)))


def symmetric_eigendecomposition(a: np.ndarray) -> Tuple[NDArray[np.float64], RealMatrix]:
    """Eigenvalues (descending) and column-orthonormal eigenvectors of a symmetric matrix

    Raises ConvergenceError when the off-diagonal mass does not fall below
    ``1e-12 * ||A||_F`` within ``MAX_SWEEPS`` sweeps.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        raise InvalidInputError("matrix must be non-empty")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix contains non-finite entries")

    scale = frobenius_norm(a)
    asymmetry = frobenius_norm(a - a.T)
    if asymmetry > SYMMETRY_TOL * max(scale, 1.0):
        raise InvalidInputError(f"matrix is not symmetric (||A - A^T||_F = {asymmetry:.3e})")
    a = 0.5 * (a + a.T)
    v = np.eye(n)

    threshold = OFF_DIAGONAL_TOL * scale
    schedule = _round_robin_schedule(n)
    sweeps = 0
    while _off_diagonal_norm(a) > threshold:
        if sweeps >= MAX_SWEEPS:
            raise ConvergenceError(
                f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (n={n})"
            )
        for p, q in schedule:
            if p.size == 0:
                continue
            a_pq = a[p, q]
            active = np.abs(a_pq) > 0.0
            if not np.any(active):
                continue
            p, q, a_pq = p[active], q[active], a_pq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * a_pq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            row_p, row_q = a[p, :], a[q, :]
            a[p, :] = c[:, None] * row_p - s[:, None] * row_q
            a[q, :] = s[:, None] * row_p + c[:, None] * row_q
            col_p, col_q = a[:, p], a[:, q]
            a[:, p] = col_p * c - col_q * s
            a[:, q] = col_p * s + col_q * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vec_p, vec_q = v[:, p], v[:, q]
            v[:, p] = vec_p * c - vec_q * s
            v[:, q] = vec_p * s + vec_q * c
        sweeps += 1

    logger.debug(f"Jacobi converged in {sweeps} sweeps (n={n})")
    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def clamp_eigenvalues(eigenvalues: NDArray[np.float64]) -> NDArray[np.float64]:
    """Zero out round-off negatives; fail on genuinely negative eigenvalues"""
    smallest = float(np.min(eigenvalues))
    if smallest < -NEGATIVE_EIGEN_TOL:
        raise NumericalError(f"matrix is not positive semidefinite (eigenvalue {smallest:.3e})")
    if smallest < 0:
        logger.debug(f"Clamping negative eigenvalue {smallest:.3e} to zero")
    return np.clip(eigenvalues, 0.0, None)


def psd_sqrt(a: np.ndarray) -> RealMatrix:
    """Symmetric square root S of a PSD matrix, S @ S = A"""
    eigenvalues, eigenvectors = symmetric_eigendecomposition(a)
    roots = np.sqrt(clamp_eigenvalues(eigenvalues))
    s = (eigenvectors * roots) @ eigenvectors.T
    return 0.5 * (s + s.T)
