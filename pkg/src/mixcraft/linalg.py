"""Dense symmetric-matrix kernels behind every density evaluation.

All routines take plain numpy arrays and treat the input as symmetric.
Positive definiteness is established by one explicit Cholesky
factorisation whose failure doubles as the degeneracy detector for
collapsed covariances, so no separate eigenvalue checks are needed.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, ZeroVariance

# Pivots below this fraction of the largest diagonal entry are treated as
# loss of positive definiteness instead of being amplified by the inverse.
PIVOT_RTOL = 1e-12


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def cholesky(m) -> np.ndarray:
    """Lower-triangular factor L with ``L @ L.T == m``.

    Raises NotPositiveDefinite when a pivot drops below
    ``PIVOT_RTOL * max(diagonal)``.
    """
    a = _as_square(m)
    d = a.shape[0]
    scale = float(np.max(np.diagonal(a)))
    if scale <= 0.0 or not np.isfinite(scale):
        raise NotPositiveDefinite("non-positive or non-finite diagonal")
    lower = np.zeros((d, d))
    tol = PIVOT_RTOL * scale
    for j in range(d):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < tol or not np.isfinite(pivot):
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at row {j} below tolerance")
        lower[j, j] = np.sqrt(pivot)
        if j + 1 < d:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def determinant(m) -> float:
    """Determinant of a positive-definite matrix via its Cholesky diagonal."""
    return float(np.prod(np.diagonal(cholesky(m))) ** 2)


def log_determinant(m) -> float:
    """log(det(m)) computed stably from the Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diagonal(cholesky(m)))))


def inverse(m) -> np.ndarray:
    """Inverse of a positive-definite matrix, symmetrised exactly."""
    lower = cholesky(m)
    linv = solve_triangular(lower, np.eye(lower.shape[0]), lower=True)
    inv = linv.T @ linv
    return (inv + inv.T) / 2.0


def correlation_from_covariance(c) -> np.ndarray:
    """Rescale a covariance to unit diagonal; off-diagonals clipped to [-1, 1]."""
    a = _as_square(c)
    diag = np.diagonal(a)
    if np.any(diag <= 0.0):
        raise ZeroVariance("covariance has a non-positive diagonal entry")
    s = np.sqrt(diag)
    r = a / np.outer(s, s)
    r = np.clip((r + r.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def covariance_from_correlation(r, sigma_sq) -> np.ndarray:
    """Assemble a covariance from a unit-diagonal correlation and variances."""
    a = _as_square(r)
    var = np.asarray(sigma_sq, dtype=float)
    if var.shape != (a.shape[0],):
        raise DimensionMismatch(
            f"need {a.shape[0]} variances for a {a.shape[0]}x{a.shape[0]} correlation, got {var.shape}"
        )
    if np.any(var <= 0.0):
        raise ValueError("variances must be strictly positive")
    s = np.sqrt(var)
    cov = a * np.outer(s, s)
    # force the diagonal to the requested variances exactly
    np.fill_diagonal(cov, var)
    return cov


def random_orthonormal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random orthonormal frame: left singular vectors of a uniform(-1, 1) draw.

    Degenerate draws (numerically rank-deficient) are retried.
    """
    if d < 1:
        raise DimensionMismatch("dimension must be at least 1")
    while True:
        draw = rng.uniform(-1.0, 1.0, size=(d, d))
        u, s, _ = np.linalg.svd(draw)
        if np.all(s > 1e-12):
            return u
