"""Separable Gaussian correlation and the marginal Gaussian log-likelihood.

The correlation between two points is prod_j rho_j ** (u_j - v_j)^2 with each
rho_j in [0, 1]; rho_j = 1 makes direction j inert. All matrix work goes
through a Cholesky factorization of R + lambda*I with an escalating diagonal
jitter fallback for nearly singular cases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, NumericalSingularityError

logger = logging.getLogger(__name__)

# Active rho values are clamped below to keep 0**0 well defined (:= 1) and
# log(rho) finite; rho = 5e-6 style inputs are legitimate, exact zero is not
# distinguishable from this floor at any realistic distance.
RHO_FLOOR = 1e-12

# Diagonal jitter escalation when Cholesky fails on R + lambda*I.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class CorrelationParams:
    """Per-coordinate correlation parameters, each in [0, 1]."""

    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float).ravel()
        if np.any(self.rho < 0.0) or np.any(self.rho > 1.0):
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    def __len__(self) -> int:
        return self.rho.shape[0]


def _rho_array(params) -> np.ndarray:
    rho = getattr(params, "rho", params)
    return np.asarray(rho, dtype=float).ravel()


def _log_rho(rho: np.ndarray) -> np.ndarray:
    return np.log(np.clip(rho, RHO_FLOOR, 1.0))


def correlation(u, v, params) -> float:
    """Correlation prod_j rho_j ** (u_j - v_j)^2 between two points."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    rho = _rho_array(params)
    if u.shape != v.shape or u.shape[0] != rho.shape[0]:
        raise DimensionMismatchError(
            f"point dims {u.shape[0]}/{v.shape[0]} vs {rho.shape[0]} correlation parameters"
        )
    return float(np.exp(np.dot((u - v) ** 2, _log_rho(rho))))


def pairwise_sqdiffs(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Coordinate-wise squared differences, shape (len(A), len(B), p)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(f"column mismatch {A.shape[1]} vs {B.shape[1]}")
    return (A[:, None, :] - B[None, :, :]) ** 2


def corr_from_sqdiffs(d2: np.ndarray, rho) -> np.ndarray:
    """Correlation matrix from a precomputed squared-difference tensor."""
    rho = _rho_array(rho)
    if d2.shape[-1] != rho.shape[0]:
        raise DimensionMismatchError(
            f"sqdiff tensor has {d2.shape[-1]} coordinates, rho has {rho.shape[0]}"
        )
    return np.exp(d2 @ _log_rho(rho))


def cholesky_with_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of A, escalating diagonal jitter on failure.

    Returns (L, jitter_used). Raises NumericalSingularityError carrying the
    attempted jitter levels when the whole ladder fails.
    """
    n = A.shape[0]
    for jitter in JITTER_LADDER:
        try:
            M = A if jitter == 0.0 else A + jitter * np.eye(n)
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            continue
        if jitter > 0.0:
            logger.debug("cholesky required diagonal jitter %.0e", jitter)
        return L, jitter
    raise NumericalSingularityError(
        f"correlation matrix not positive definite after jitter {JITTER_LADDER}",
        jitters=JITTER_LADDER,
    )


@dataclass
class KernelMatrix:
    """Correlation matrix R with a cached Cholesky factor of R + lambda*I."""

    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def factor(self, lam: float) -> np.ndarray:
        """Lower Cholesky factor of values + lam * I (cached per lam)."""
        key = float(lam)
        if key not in self._cache:
            n = self.values.shape[0]
            L, _ = cholesky_with_jitter(self.values + key * np.eye(n))
            self._cache[key] = L
        return self._cache[key]

    def solve(self, lam: float, b: np.ndarray) -> np.ndarray:
        """(values + lam*I)^{-1} b via two triangular solves."""
        L = self.factor(lam)
        z = solve_triangular(L, b, lower=True, check_finite=False)
        return solve_triangular(L.T, z, lower=False, check_finite=False)


def correlation_matrix(X: np.ndarray, params) -> KernelMatrix:
    """Symmetric unit-diagonal correlation matrix over the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rho = _rho_array(params)
    if X.shape[1] != rho.shape[0]:
        raise DimensionMismatchError(
            f"design has {X.shape[1]} columns, rho has {rho.shape[0]}"
        )
    R = corr_from_sqdiffs(pairwise_sqdiffs(X), rho)
    # exact symmetry / unit diagonal regardless of fp rounding in exp
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return KernelMatrix(values=R)


def cross_correlation(X_new: np.ndarray, X_old: np.ndarray, params) -> np.ndarray:
    """Cross-correlation matrix, entry (i, j) = correlation(x_new_i, x_old_j)."""
    return corr_from_sqdiffs(pairwise_sqdiffs(X_new, X_old), _rho_array(params))


def gaussian_loglik_from_factor(
    L: np.ndarray, resid: np.ndarray, sigma2: float
) -> float:
    """log N(resid; 0, sigma2 * L L^T) from the Cholesky factor of R + lam*I."""
    n = resid.shape[0]
    z = solve_triangular(L, resid, lower=True, check_finite=False)
    logdet = n * np.log(sigma2) + 2.0 * np.sum(np.log(np.diag(L)))
    quad = float(z @ z) / sigma2
    return -0.5 * (n * LOG_2PI + logdet + quad)


def log_likelihood(data, state) -> float:
    """Marginal log-likelihood of y under the Gaussian process model.

    y ~ N(beta0 * 1 + X beta, sigma2_z * (R(rho) + lambda * I)), evaluated
    via triangular factorization: log-determinant from the factor diagonal,
    quadratic form from two triangular solves.
    """
    if state.sigma2_z <= 0.0:
        raise ValueError(f"sigma2_z must be positive, got {state.sigma2_z}")
    cache = LikelihoodCache(data)
    return cache.log_likelihood(state)


class LikelihoodCache:
    """Precomputes the pairwise squared differences of a fixed dataset.

    The per-state cost is then one small matmul, an exp, and a Cholesky,
    which is what the sampler's inner loop needs.
    """

    def __init__(self, data):
        self.X = np.atleast_2d(np.asarray(data.X, dtype=float))
        self.y = np.asarray(data.y, dtype=float).ravel()
        self.n = self.X.shape[0]
        self.d2 = pairwise_sqdiffs(self.X)

    def corr(self, rho) -> np.ndarray:
        R = np.exp(self.d2 @ _log_rho(_rho_array(rho)))
        np.fill_diagonal(R, 1.0)
        return R

    def factor(self, rho, lam: float) -> np.ndarray:
        A = self.corr(rho)
        idx = np.arange(self.n)
        A[idx, idx] += lam
        L, _ = cholesky_with_jitter(A)
        return L

    def log_likelihood(self, state) -> float:
        L = self.factor(state.rho, state.lam)
        resid = self.y - state.beta0 - self.X @ state.beta
        return gaussian_loglik_from_factor(L, resid, state.sigma2_z)
