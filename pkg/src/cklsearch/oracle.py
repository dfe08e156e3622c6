"""Scale-free comparison oracle.

The choice model: presented with two candidate points and a target, the
oracle answers "the first point is closer" with probability

    p = ||xj - xt||^gamma / (||xi - xt||^gamma + ||xj - xt||^gamma).

The exponent gamma controls how sharp the oracle is; gamma = 2 recovers
the classic CKL model.  The probability depends only on the ratio of the
two target distances, so it is invariant under common translation and
scaling of all three points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError


@dataclass(frozen=True)
class OracleModel:
    """Parameters of the scale-free choice model."""

    gamma: float
    dim: int

    def __post_init__(self):
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise InvalidInputError(f"gamma must be positive and finite, got {self.gamma}")
        if self.dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class QueryOutcomeEstimate:
    """Monte Carlo estimate of the mean correct-answer probability."""

    p_hat: float
    n_samples: int
    std_err: float

    def __post_init__(self):
        if not (0.0 <= self.p_hat <= 1.0):
            raise InvalidInputError(f"p_hat out of [0,1]: {self.p_hat}")
        if self.n_samples < 1:
            raise InvalidInputError("n_samples must be >= 1")
        if self.std_err > 0.5 / np.sqrt(self.n_samples) + 1e-15:
            raise InvalidInputError("std_err exceeds binomial bound")


def _check_dims(model: OracleModel, *points):
    for p in points:
        if np.shape(p) != (model.dim,):
            raise InvalidInputError(
                f"point has shape {np.shape(p)}, expected ({model.dim},)"
            )


def answer_probability(model: OracleModel, xi, xj, xt) -> float:
    """Probability that the oracle answers "xi is closer to xt than xj".

    Computed through the distance ratio r = ||xi-xt||/||xj-xt|| as
    1/(1 + r^gamma) in log space, which stays finite for large gamma.
    Zero-distance conventions: both distances zero -> 1/2; only xi at the
    target -> 1; only xj at the target -> 0.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    xt = np.asarray(xt, dtype=float)
    _check_dims(model, xi, xj, xt)
    di = float(np.linalg.norm(xi - xt))
    dj = float(np.linalg.norm(xj - xt))
    if di == 0.0 and dj == 0.0:
        return 0.5
    if di == 0.0:
        return 1.0
    if dj == 0.0:
        return 0.0
    # p = 1/(1 + (di/dj)^gamma) = expit(-gamma * log(di/dj))
    return float(expit(-model.gamma * (np.log(di) - np.log(dj))))


def sample_answer(model: OracleModel, xi, xj, xt, rng: np.random.Generator) -> bool:
    """Draw one Bernoulli answer: True means "xi is closer".

    Uses exactly one uniform draw from ``rng``.
    """
    p = answer_probability(model, xi, xj, xt)
    return bool(rng.random() < p)


def sample_in_ball(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``n`` points uniformly from the unit ball in ``dim`` dimensions.

    Gaussian direction scaled by U^(1/dim): exact and rejection-free.
    """
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / dim)
    return g * radii[:, None]


def _ball_radii_pairs(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Radii of two independent uniform-ball points, shape (n, 2).

    The correct-answer probability depends on the query points only
    through their distances to the central target, so radii are a
    sufficient statistic for the Monte Carlo estimate below.
    """
    return rng.random((n, 2)) ** (1.0 / dim)


def _mean_correct_prob(gamma: float, radii: np.ndarray) -> np.ndarray:
    """P(correct) = max(p, 1-p) for query points at the given radii."""
    log_ratio = np.log(radii[:, 0]) - np.log(radii[:, 1])
    return expit(gamma * np.abs(log_ratio))


def estimate_mean_accuracy(
    model: OracleModel, n_samples: int, rng: np.random.Generator, chunk: int = 200_000
) -> QueryOutcomeEstimate:
    """Monte Carlo mean probability of a correct answer on random queries.

    Query points are sampled uniformly from the unit ball around the
    target; each sample contributes max(p, 1-p), the probability that the
    oracle picks the truly nearer point.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        probs = _mean_correct_prob(model.gamma, _ball_radii_pairs(model.dim, m, rng))
        total += float(probs.sum())
        total_sq += float((probs * probs).sum())
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    std_err = float(np.sqrt(var / n_samples))
    return QueryOutcomeEstimate(p_hat=float(mean), n_samples=n_samples, std_err=std_err)


def mean_accuracy_expansion(gamma: float, dim: int) -> float:
    """First-order closed form 1/2 + (gamma/2) * d / ((d+1)(2d+1))."""
    return 0.5 + (gamma / 2.0) * dim / ((dim + 1) * (2 * dim + 1))


def calibrate_gamma(
    dim: int,
    target_accuracy: float,
    grid,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Grid value of gamma whose estimated mean accuracy is nearest the target.

    All grid points are evaluated on one shared sample of query radii
    (common random numbers), which makes the argmin far less noisy than
    independent estimates would be.  Ties break toward the smaller gamma.
    """
    grid = list(grid)
    if not grid:
        raise InvalidInputError("gamma grid must be non-empty")
    if any(g <= 0 for g in grid):
        raise InvalidInputError("gamma grid values must be positive")
    if sorted(grid) != grid:
        raise InvalidInputError("gamma grid must be sorted ascending")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    radii = _ball_radii_pairs(dim, n_samples, rng)
    abs_log_ratio = np.abs(np.log(radii[:, 0]) - np.log(radii[:, 1]))
    best_gamma = grid[0]
    best_err = np.inf
    for g in grid:
        p_hat = float(expit(g * abs_log_ratio).mean())
        err = abs(p_hat - target_accuracy)
        if err < best_err:  # strict: ties keep the earlier (smaller) gamma
            best_err = err
            best_gamma = g
    return float(best_gamma)
