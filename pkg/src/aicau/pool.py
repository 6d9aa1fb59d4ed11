"""Discretized state space and labeled-data bookkeeping.

The grid is the Cartesian product of `resolution` values equally spaced over
[0, 2*pi] on each axis, indexed row-major (first axis outer). The pool keeps
every observed realization per grid index together with the batch tag it was
drawn in, enforces the no-repeat rule for noiseless problems, and records the
per-round query history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .oracle import NoisyDraw, OracleSpec, ProblemType, sample


class RepeatQueryError(ValueError):
    """A noiseless-problem pool was asked to label an index twice."""


@dataclass(frozen=True)
class StateGrid:
    """Indexed discretization of [0, 2*pi]^2."""

    resolution: int
    points: np.ndarray  # (n, 2), row-major over (axis1, axis2)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def build_grid(resolution: int) -> StateGrid:
    """Row-major grid of resolution^2 points covering [0, 2*pi]^2 inclusive."""
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    axis = np.linspace(0.0, 2.0 * np.pi, resolution)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack([x1.ravel(), x2.ravel()])
    return StateGrid(resolution=resolution, points=points)


@dataclass
class LabeledPool:
    """All labeled data accumulated so far for one replicate run.

    observations[i] is the list of (value, round_tag) realizations at grid
    index i; history[k] is the index list committed in round k+1 (the initial
    labeling is not part of history). allow_repeats is False exactly for
    noiseless problems.
    """

    n: int
    allow_repeats: bool
    observations: list = field(default_factory=list)
    round: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not self.observations:
            self.observations = [[] for _ in range(self.n)]

    @property
    def labeled_mask(self) -> np.ndarray:
        return np.array([len(obs) > 0 for obs in self.observations], dtype=bool)

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def n_observations(self) -> int:
        return sum(len(obs) for obs in self.observations)

    def values_at(self, index: int) -> np.ndarray:
        return np.array([v for v, _ in self.observations[index]], dtype=float)

    def tagged_values_at(self, index: int) -> dict:
        """Observed values at one index grouped by round tag (insertion order)."""
        grouped: dict = {}
        for value, tag in self.observations[index]:
            grouped.setdefault(tag, []).append(value)
        return grouped

    def training_rows(self, grid: StateGrid):
        """One (x, y) row per stored realization; repeated x's repeat rows."""
        idx = []
        ys = []
        for i, obs in enumerate(self.observations):
            for value, _ in obs:
                idx.append(i)
                ys.append(value)
        return grid.points[np.array(idx, dtype=int)], np.array(ys, dtype=float)

    def commit(self, indices, draw: NoisyDraw) -> None:
        """Append one round of queries; increments the round counter."""
        indices = [int(i) for i in indices]
        if list(draw.point_indices) != indices:
            raise ValueError("draw is not aligned with the committed indices")
        if not self.allow_repeats:
            if len(set(indices)) != len(indices):
                raise RepeatQueryError("duplicate index within a noiseless-problem batch")
            already = [i for i in indices if self.observations[i]]
            if already:
                raise RepeatQueryError(f"indices already labeled: {already}")
        for i, value in zip(indices, draw.values):
            self.observations[i].append((float(value), int(draw.round_tag)))
        self.round += 1
        self.history.append(indices)

    # -- JSON checkpointing ------------------------------------------------

    def to_state(self) -> dict:
        return {
            "n": self.n,
            "allow_repeats": self.allow_repeats,
            "round": self.round,
            "history": self.history,
            "observations": [[[v, t] for v, t in obs] for obs in self.observations],
        }

    @classmethod
    def from_state(cls, state: dict) -> "LabeledPool":
        pool = cls(n=state["n"], allow_repeats=state["allow_repeats"])
        pool.round = state["round"]
        pool.history = [list(map(int, h)) for h in state["history"]]
        pool.observations = [
            [(float(v), int(t)) for v, t in obs] for obs in state["observations"]
        ]
        return pool

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_state(), fh)

    @classmethod
    def load(cls, path) -> "LabeledPool":
        with open(path) as fh:
            return cls.from_state(json.load(fh))


def init_pool(
    grid: StateGrid,
    n_init: int,
    spec: OracleSpec,
    rng: np.random.Generator,
) -> LabeledPool:
    """Uniform without-replacement initial labeling, one joint oracle draw.

    Deterministic given rng so strategies sharing a seed start from the same
    pool. Tagged round 0.
    """
    if not 1 <= n_init <= grid.n:
        raise ValueError(f"n_init must be in [1, {grid.n}], got {n_init}")
    indices = np.sort(rng.choice(grid.n, size=n_init, replace=False))
    draw = sample(spec, grid.points[indices], rng, point_indices=indices, round_tag=0)
    pool = LabeledPool(n=grid.n, allow_repeats=spec.problem_type != ProblemType.NOISELESS)
    for i, value in zip(indices, draw.values):
        pool.observations[int(i)].append((float(value), 0))
    return pool
