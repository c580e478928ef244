"""Maximin Latin hypercube designs, the synthetic test function, and scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError


@dataclass
class LhdDesign:
    """Design points in a box plus the achieved minimum pairwise distance."""

    points: np.ndarray
    maximin_dist: float


def _min_pairwise_dist(points: np.ndarray) -> float:
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(d2.min()))


def random_lhd(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Random Latin hypercube on [0, 1]^p using stratum midpoints."""
    design = np.empty((n, p))
    for j in range(p):
        design[:, j] = (rng.permutation(n) + 0.5) / n
    return design


def _hill_climb(points: np.ndarray, max_passes: int = 30) -> np.ndarray:
    """Pairwise-swap ascent on the minimum interpoint distance.

    Swapping two entries within one column preserves the Latin property.
    Only strictly improving swaps are kept, so the minimum distance is
    monotone nondecreasing. The squared-distance matrix is updated
    incrementally: a swap in one column touches only two rows/columns of it.
    """
    n, p = points.shape
    D = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(D, np.inf)
    best = D.min()
    for _ in range(max_passes):
        improved = False
        for col in range(p):
            for i in range(n - 1):
                for j in range(i + 1, n):
                    xi, xj = points[i, col], points[j, col]
                    c = points[:, col]
                    di_new = D[i] - (xi - c) ** 2 + (xj - c) ** 2
                    dj_new = D[j] - (xj - c) ** 2 + (xi - c) ** 2
                    di_new[j] = D[i, j]  # i-j gap is invariant under the swap
                    dj_new[i] = D[j, i]
                    di_new[i] = np.inf
                    dj_new[j] = np.inf
                    old_i, old_j = D[i].copy(), D[j].copy()
                    D[i], D[j] = di_new, dj_new
                    D[:, i], D[:, j] = di_new, dj_new
                    cand = D.min()
                    if cand > best:
                        best = cand
                        points[i, col], points[j, col] = xj, xi
                        improved = True
                    else:
                        D[i], D[j] = old_i, old_j
                        D[:, i], D[:, j] = old_i, old_j
        if not improved:
            break
    return points


def maximin_lhd(
    n: int,
    p: int,
    box: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
    n_restarts: int = 5,
) -> LhdDesign:
    """Best-of-restarts maximin Latin hypercube in [box[0], box[1]]^p.

    Each restart draws a fresh random LHD and improves it by swap
    hill-climbing; the restart with the largest minimum pairwise distance
    wins. Deterministic given the seed.
    """
    if n < 2:
        raise ValueError("need n >= 2 design points")
    if n_restarts < 1:
        raise ValueError("need n_restarts >= 1")
    a, b = float(box[0]), float(box[1])
    if not b > a:
        raise ValueError(f"box must satisfy a < b, got {box}")
    rng = np.random.default_rng(seed)
    best_pts = None
    best_dist = -np.inf
    for _ in range(n_restarts):
        pts = _hill_climb(random_lhd(n, p, rng))
        dist = _min_pairwise_dist(pts)
        if dist > best_dist:
            best_dist = dist
            best_pts = pts
    scaled = a + (b - a) * best_pts
    return LhdDesign(points=scaled, maximin_dist=_min_pairwise_dist(scaled))


def sim_response(x, noise_sd: float = 0.1, rng: np.random.Generator | None = None) -> float:
    """Synthetic 5-d response: linear in x2..x4, cosine in x1..x3, x5 inert.

    3*x2 + 4*x3 + 5*x4 + 5*cos(3*pi*x1/2) + 4*cos(2*pi*x2/2) + 3*cos(pi*x3/2)
    plus N(0, noise_sd^2) noise when noise_sd > 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != 5:
        raise DimensionMismatchError(f"expected a 5-d point, got length {x.shape[0]}")
    value = (
        3.0 * x[1]
        + 4.0 * x[2]
        + 5.0 * x[3]
        + 5.0 * np.cos(3.0 * np.pi * x[0] / 2.0)
        + 4.0 * np.cos(2.0 * np.pi * x[1] / 2.0)
        + 3.0 * np.cos(np.pi * x[2] / 2.0)
    )
    if noise_sd > 0.0:
        if rng is None:
            raise ValueError("rng required when noise_sd > 0")
        value += rng.normal(0.0, noise_sd)
    return float(value)


def sim_response_batch(
    X: np.ndarray, noise_sd: float = 0.1, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Vector of sim_response values over the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.array([sim_response(row, noise_sd=noise_sd, rng=rng) for row in X])


def rmspe(y_true, y_pred) -> float:
    """Root mean squared prediction error."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatchError(
            f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}"
        )
    if y_true.shape[0] == 0:
        raise ValueError("rmspe needs at least one value")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))
