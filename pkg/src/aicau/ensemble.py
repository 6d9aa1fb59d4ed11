"""Deep-ensemble model distribution: K small MLPs with complementary-fold bags.

Each member is a 3-hidden-layer ReLU network (default 32, 32, 16) with a
linear scalar output, trained full-batch with Adam on the mean squared error
of its own bag. Bags are complementary folds of the observation rows: the
rows are partitioned into round(1/(1-bag_fraction)) folds and member j holds
out fold j, so with the default 5 members each trains on exactly 80% of the
data. Inputs are standardized with pool statistics; targets are left in
their natural range.

Everything is deterministic given the seed sequence: member initializations
and the fold permutation come from spawned child seeds, and training is
full-batch, so two fits from identical pools and seeds produce bitwise
identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .pool import LabeledPool, StateGrid


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 5
    hidden_sizes: tuple = (32, 32, 16)
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    bag_fraction: float = 0.8
    min_improvement: float = 1e-4
    patience: int = 10
    max_epochs: int = 500

    def __post_init__(self):
        if self.n_members < 2:
            raise ValueError("need at least 2 members for a sample variance")
        if len(self.hidden_sizes) != 3:
            raise ValueError("the training kernel is fixed at 3 hidden layers")
        if not 0.0 < self.bag_fraction <= 1.0:
            raise ValueError("bag_fraction must be in (0, 1]")


@dataclass
class EnsembleModel:
    """Trained member parameter sets plus the shared input standardization."""

    members: list  # each entry: (W1, b1, W2, b2, W3, b3, W4, b4)
    x_mean: np.ndarray
    x_std: np.ndarray
    training_round: int = 0
    epochs_run: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)


@dataclass
class PredictiveSummary:
    """Per-grid-index ensemble mean, sample variance (ddof=1), and the raw
    member-by-point prediction matrix."""

    mean: np.ndarray
    variance: np.ndarray
    member_matrix: np.ndarray  # (K, n)


def init_member_params(input_dim: int, hidden_sizes, rng: np.random.Generator):
    """Uniform fan-in-scaled weight init U(+-1/sqrt(fan_in)), zero biases.

    The smaller-than-He bound matters here: at the fixed learning rate and
    epoch budget it roughly halves the trained ensemble's grid MSE on the
    benchmark signal and keeps the plateau stopper from firing mid-descent.
    """
    sizes = [input_dim, *hidden_sizes, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return tuple(params)


def _standardize_stats(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return mean, std


def fit(
    pool: LabeledPool,
    grid: StateGrid,
    config: EnsembleConfig,
    seed_seq: np.random.SeedSequence,
) -> EnsembleModel:
    """Train all members on complementary-fold bags of the observation rows."""
    X_raw, y = pool.training_rows(grid)
    n_rows = X_raw.shape[0]
    if n_rows < 2:
        raise ValueError(f"need at least 2 observations to fit, got {n_rows}")

    x_mean, x_std = _standardize_stats(X_raw)
    X = (X_raw - x_mean) / x_std

    children = seed_seq.spawn(config.n_members + 1)
    fold_rng = np.random.default_rng(children[0])
    n_folds = max(1, round(1.0 / (1.0 - config.bag_fraction))) if config.bag_fraction < 1.0 else 1
    perm = fold_rng.permutation(n_rows)
    folds = np.array_split(perm, n_folds)

    members = []
    epochs_run = []
    loss_history = []
    for j in range(config.n_members):
        member_rng = np.random.default_rng(children[j + 1])
        params = init_member_params(X.shape[1], config.hidden_sizes, member_rng)
        if n_folds > 1:
            held_out = folds[j % n_folds]
            bag = np.setdiff1d(perm, held_out)
        else:
            bag = perm
        if bag.size == 0:
            bag = perm
        Xb = np.ascontiguousarray(X[bag])
        yb = np.ascontiguousarray(y[bag])
        epochs, losses = kernels.train_scalar_mlp(
            Xb,
            yb,
            *params,
            config.learning_rate,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            config.max_epochs,
            config.min_improvement,
            config.patience,
        )
        members.append(params)
        epochs_run.append(int(epochs))
        loss_history.append(losses)

    return EnsembleModel(
        members=members,
        x_mean=x_mean,
        x_std=x_std,
        training_round=pool.round,
        epochs_run=epochs_run,
        loss_history=loss_history,
    )


def predict_points(model: EnsembleModel, points: np.ndarray) -> PredictiveSummary:
    """Member predictions, mean, and sample variance at arbitrary points."""
    X = (np.atleast_2d(points) - model.x_mean) / model.x_std
    member_matrix = np.stack([kernels.mlp_forward(X, p) for p in model.members])
    return PredictiveSummary(
        mean=member_matrix.mean(axis=0),
        variance=member_matrix.var(axis=0, ddof=1),
        member_matrix=member_matrix,
    )


def predict(model: EnsembleModel, grid: StateGrid) -> PredictiveSummary:
    return predict_points(model, grid.points)


# -- checkpoint serialization: flat values plus a shape header ---------------


def pack_model(model: EnsembleModel) -> dict:
    shapes = [[list(p.shape) for p in member] for member in model.members]
    values = np.concatenate([p.ravel() for member in model.members for p in member])
    return {
        "shapes": shapes,
        "values": values.tolist(),
        "x_mean": model.x_mean.tolist(),
        "x_std": model.x_std.tolist(),
        "training_round": model.training_round,
    }


def unpack_model(state: dict) -> EnsembleModel:
    flat = np.asarray(state["values"], dtype=float)
    members = []
    offset = 0
    for member_shapes in state["shapes"]:
        params = []
        for shape in member_shapes:
            size = int(np.prod(shape))
            params.append(flat[offset : offset + size].reshape(shape))
            offset += size
        members.append(tuple(params))
    return EnsembleModel(
        members=members,
        x_mean=np.asarray(state["x_mean"], dtype=float),
        x_std=np.asarray(state["x_std"], dtype=float),
        training_round=int(state["training_round"]),
    )
