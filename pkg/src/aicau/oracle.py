"""Simulated ground-truth oracle: smooth 2-D signal with three noise regimes.

The signal is sin(3*x1/2) * sin(3*x2/2) on [0, 2*pi]^2. Observation noise is
heteroskedastic with standard deviation noise_scale * sqrt(1 - signal^2):
zero where the signal saturates at +-1, maximal where it crosses zero.

Problem types:
  1 - noiseless: every observation is the exact signal value.
  2 - uncorrelated heteroskedastic Gaussian noise.
  3 - correlated noise: all points of one call are drawn from a single
      joint Gaussian whose correlation decays as exp(-decay * distance).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .linalg import cholesky


class ProblemType(enum.IntEnum):
    NOISELESS = 1
    UNCORRELATED = 2
    CORRELATED = 3


@dataclass(frozen=True)
class OracleSpec:
    """Configuration of the simulated oracle.

    correlation_decay is the rate in exp(-decay * d); only type 3 uses it.
    correlation_metric picks the distance d between 2-D points: "euclidean"
    (default), "l1", or "linf".
    """

    problem_type: ProblemType = ProblemType.NOISELESS
    noise_scale: float = 0.1
    correlation_decay: float = 2.0 / np.pi
    correlation_metric: str = "euclidean"
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.correlation_metric not in ("euclidean", "l1", "linf"):
            raise ValueError(f"unknown correlation_metric: {self.correlation_metric}")


@dataclass
class NoisyDraw:
    """One batch of oracle observations.

    For type-3 problems all values of one draw come from a single joint
    Gaussian; round_tag records which batch they were realized in, which the
    correlated cobias estimator needs to pair co-realized observations.
    """

    point_indices: list = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    round_tag: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.point_indices) != self.values.shape[0]:
            raise ValueError("point_indices and values must have equal length")


def mean_signal(points) -> np.ndarray:
    """Noise-free signal at each row of points (m, 2); values in [-1, 1]."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.sin(1.5 * pts[:, 0]) * np.sin(1.5 * pts[:, 1])


def noise_std(spec: OracleSpec, points) -> np.ndarray:
    """Noise standard deviation at each point; identically zero for type 1."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.problem_type == ProblemType.NOISELESS:
        return np.zeros(pts.shape[0])
    mu = mean_signal(pts)
    # sin can overshoot |1| by ~1 ulp; clamp before the square root
    return spec.noise_scale * np.sqrt(np.maximum(1.0 - mu * mu, 0.0))


def _pairwise_distance(a, b, metric: str) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if metric == "euclidean":
        return np.sqrt((diff * diff).sum(axis=-1))
    if metric == "l1":
        return np.abs(diff).sum(axis=-1)
    return np.abs(diff).max(axis=-1)


def noise_correlation(spec: OracleSpec, x, x_star) -> float:
    """Noise correlation exp(-decay * d(x, x*)) between two points."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    b = np.atleast_2d(np.asarray(x_star, dtype=float))
    return float(np.exp(-spec.correlation_decay * _pairwise_distance(a, b, spec.correlation_metric))[0, 0])


def correlation_matrix(spec: OracleSpec, points) -> np.ndarray:
    """Full noise-correlation matrix over the given points (type 3 kernel)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = _pairwise_distance(pts, pts, spec.correlation_metric)
    return np.exp(-spec.correlation_decay * d)


def realize(spec: OracleSpec, points, rng: np.random.Generator, n_draws: int = 1) -> np.ndarray:
    """n_draws independent observation vectors, shape (n_draws, m).

    Each row is one batch: for type 3 the m points of a row are jointly
    correlated, while rows are independent of each other. Types 1 and 2
    consume the generator in the same order (one standard-normal block for
    type 2 and 3), so a type-3 draw with identity correlation reproduces the
    type-2 draw bit for bit.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m == 0:
        raise ValueError("points must be nonempty")
    mu = mean_signal(pts)
    if spec.problem_type == ProblemType.NOISELESS:
        return np.tile(mu, (n_draws, 1))
    std = noise_std(spec, pts)
    eps = rng.standard_normal((n_draws, m))
    if spec.problem_type == ProblemType.CORRELATED:
        corr = correlation_matrix(spec, pts)
        L = cholesky(corr)
        eps = eps @ L.T
    return mu + std * eps


def sample(
    spec: OracleSpec,
    points,
    rng: np.random.Generator,
    point_indices=None,
    round_tag: int = 0,
) -> NoisyDraw:
    """One jointly-drawn observation per point, wrapped with batch metadata."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    values = realize(spec, pts, rng, n_draws=1)[0]
    if point_indices is None:
        point_indices = list(range(pts.shape[0]))
    return NoisyDraw(point_indices=list(point_indices), values=values, round_tag=round_tag)


def noise_covariance(spec: OracleSpec, points) -> np.ndarray:
    """True aleatoric covariance matrix over the given points.

    Zero for type 1, diagonal for type 2, dense std_i*std_j*corr_ij for
    type 3.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if spec.problem_type == ProblemType.NOISELESS:
        return np.zeros((m, m))
    std = noise_std(spec, pts)
    if spec.problem_type == ProblemType.UNCORRELATED:
        return np.diag(std * std)
    return np.outer(std, std) * correlation_matrix(spec, pts)
