"""Pointwise error decomposition and its cross-point (cobias) extension.

The pointwise expected squared error between the ensemble and the noisy
ground truth splits into ensemble variance + squared bias + aleatoric
variance; across two points the same expansion gives ensemble covariance +
bias product + aleatoric covariance. Stacked over the grid this yields the
decomposition

    total = model_cov + bias_outer + noise_cov

whose diagonal is the pointwise expected MSE field. This module computes the
pieces empirically from stored realizations, assembles them, and provides
two of the three bias-estimation back ends (the perfect-information path and
the GP direct estimator); the Gram-network quadratic estimator lives in
`quadratic`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel

from . import oracle
from .ensemble import PredictiveSummary
from .linalg import sym_eigen, symmetrize
from .pool import LabeledPool, StateGrid


class NotObservedError(LookupError):
    """The requested grid index has no stored realization."""


@dataclass
class PemseField:
    """Per-grid-index components of the expected squared error.

    total = model_var + bias_sq + noise_var holds exactly because the sum is
    formed on access; reducible drops the aleatoric part. Back ends that
    cannot see the noise leave noise_var at zero, so their total equals their
    reducible field.
    """

    model_var: np.ndarray
    bias_sq: np.ndarray
    noise_var: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.model_var + self.bias_sq + self.noise_var

    @property
    def reducible(self) -> np.ndarray:
        return self.model_var + self.bias_sq

    def emse(self) -> float:
        return float(np.mean(self.total))


@dataclass
class CobiasDecomposition:
    """Grid-wide matrices of the decomposition and their sum.

    bias_vec is the signed bias vector when the back end knows it (perfect
    information or direct estimation); the quadratic back end predicts
    bias_outer entrywise and only determines magnitudes on the diagonal.
    """

    model_cov: np.ndarray
    bias_outer: np.ndarray
    noise_cov: np.ndarray
    total: np.ndarray
    round_index: int = 0
    bias_vec: np.ndarray | None = None


def assemble(model_cov, bias_outer, noise_cov, round_index: int = 0, bias_vec=None) -> CobiasDecomposition:
    """Elementwise sum of the three symmetric components."""
    model_cov = symmetrize(model_cov)
    bias_outer = symmetrize(bias_outer)
    noise_cov = symmetrize(noise_cov)
    if not (model_cov.shape == bias_outer.shape == noise_cov.shape):
        raise ValueError(
            f"dimension mismatch: {model_cov.shape} vs {bias_outer.shape} vs {noise_cov.shape}"
        )
    total = model_cov + bias_outer + noise_cov
    return CobiasDecomposition(
        model_cov=model_cov,
        bias_outer=bias_outer,
        noise_cov=noise_cov,
        total=total,
        round_index=round_index,
        bias_vec=None if bias_vec is None else np.asarray(bias_vec, dtype=float),
    )


def model_covariance(member_matrix: np.ndarray) -> np.ndarray:
    """Pairwise sample covariance of member predictions (divisor K-1).

    The diagonal reproduces PredictiveSummary.variance; the rank is at most
    K-1 because the K centered rows sum to zero.
    """
    M = np.asarray(member_matrix, dtype=float)
    K = M.shape[0]
    if K < 2:
        raise ValueError(f"need at least 2 members, got {K}")
    centered = M - M.mean(axis=0)
    cov = centered.T @ centered / (K - 1)
    return 0.5 * (cov + cov.T)


def bias_outer_product(bias: np.ndarray) -> np.ndarray:
    """Rank-1 cobias matrix from a signed bias vector."""
    bias = np.asarray(bias, dtype=float)
    return np.outer(bias, bias)


# ---------------------------------------------------------------------------
# empirical estimators from stored realizations
# ---------------------------------------------------------------------------


def empirical_bias(summary: PredictiveSummary, pool: LabeledPool, index: int) -> float:
    """Mean member prediction minus mean observed value at one index."""
    values = pool.values_at(index)
    if values.size == 0:
        raise NotObservedError(f"grid index {index} has no observations")
    return float(summary.member_matrix[:, index].mean() - values.mean())


def empirical_bias_vector(summary: PredictiveSummary, pool: LabeledPool):
    """(observed_indices, bias estimates) over every observed grid index."""
    indices = pool.labeled_indices
    biases = np.array([empirical_bias(summary, pool, int(i)) for i in indices])
    return indices, biases


def _diagonal_pemse(summary: PredictiveSummary, pool: LabeledPool, i: int) -> float:
    values = pool.values_at(i)
    if values.size == 0:
        raise NotObservedError(f"grid index {i} has no observations")
    resid = summary.member_matrix[:, i][:, None] - values[None, :]
    return float(np.mean(resid * resid))


def empirical_omega_uncorrelated(
    summary: PredictiveSummary, pool: LabeledPool, i: int, j: int
) -> float:
    """Cross-point error product assuming independent draws at i and j.

    Off the diagonal the double sum over realizations factorizes, so this is
    the member average of (f_k(x_i) - ybar_i)(f_k(x_j) - ybar_j). On the
    diagonal the paired form applies (each realization against itself).
    """
    if i == j:
        return _diagonal_pemse(summary, pool, i)
    yi = pool.values_at(i)
    yj = pool.values_at(j)
    if yi.size == 0 or yj.size == 0:
        raise NotObservedError(f"grid pair ({i}, {j}) is not fully observed")
    ri = summary.member_matrix[:, i] - yi.mean()
    rj = summary.member_matrix[:, j] - yj.mean()
    return float(np.mean(ri * rj))


def co_realized_pairs(pool: LabeledPool, i: int, j: int):
    """Value pairs at (i, j) drawn in the same batch, matched positionally
    within each shared round tag."""
    by_tag_i = pool.tagged_values_at(i)
    by_tag_j = pool.tagged_values_at(j)
    pairs = []
    for tag in sorted(set(by_tag_i) & set(by_tag_j)):
        for vi, vj in zip(by_tag_i[tag], by_tag_j[tag]):
            pairs.append((vi, vj))
    return pairs


def empirical_omega_correlated(
    summary: PredictiveSummary, pool: LabeledPool, i: int, j: int
) -> float:
    """Cross-point error product using only co-realized observation pairs,
    which is what captures correlated noise."""
    if i == j:
        return _diagonal_pemse(summary, pool, i)
    pairs = co_realized_pairs(pool, i, j)
    if not pairs:
        raise NotObservedError(f"grid pair ({i}, {j}) has no co-realized draws")
    yi = np.array([p[0] for p in pairs])
    yj = np.array([p[1] for p in pairs])
    fi = summary.member_matrix[:, i][:, None]
    fj = summary.member_matrix[:, j][:, None]
    return float(np.mean((fi - yi[None, :]) * (fj - yj[None, :])))


# ---------------------------------------------------------------------------
# perfect-information back end
# ---------------------------------------------------------------------------


def cheat_estimate(
    summary: PredictiveSummary,
    spec: oracle.OracleSpec,
    grid: StateGrid,
    rng: np.random.Generator,
    n_realizations: int = 10,
    with_matrices: bool = True,
    round_index: int = 0,
):
    """Bias from fresh oracle realizations at every grid point, true noise.

    The noiseless problem needs a single exact realization; noisy problems
    average n_realizations fresh draws, each one a jointly-correlated
    grid-wide batch for type 3. Returns (PemseField, CobiasDecomposition or
    None).
    """
    n_draws = 1 if spec.problem_type == oracle.ProblemType.NOISELESS else n_realizations
    draws = oracle.realize(spec, grid.points, rng, n_draws=n_draws)
    bias = summary.mean - draws.mean(axis=0)
    noise_cov = oracle.noise_covariance(spec, grid.points)
    field = PemseField(
        model_var=summary.variance,
        bias_sq=bias * bias,
        noise_var=np.diag(noise_cov).copy(),
    )
    decomp = None
    if with_matrices:
        decomp = assemble(
            model_covariance(summary.member_matrix),
            bias_outer_product(bias),
            noise_cov,
            round_index=round_index,
            bias_vec=bias,
        )
        decomp.bias_vec = bias
    return field, decomp


# ---------------------------------------------------------------------------
# direct estimation: GP on concatenated point features
# ---------------------------------------------------------------------------


def point_features(summary: PredictiveSummary, grid: StateGrid) -> np.ndarray:
    """Per-point regression input [x1, x2, ensemble mean, ensemble variance]."""
    return np.column_stack([grid.points, summary.mean, summary.variance])


def direct_fit_predict(
    train_inputs: np.ndarray,
    train_targets: np.ndarray,
    query_inputs: np.ndarray,
    seed: int,
    n_restarts: int = 3,
    alpha: float = 1e-6,
) -> np.ndarray:
    """GP posterior mean at the query inputs.

    Anisotropic RBF times a constant kernel, hyperparameters fit by marginal
    likelihood with bounded multi-restart optimization; targets standardized
    internally. Constant targets short-circuit to a constant prediction.
    """
    t = np.asarray(train_targets, dtype=float)
    X = np.asarray(train_inputs, dtype=float)
    if t.size < 2:
        raise ValueError(f"need at least 2 training rows, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise ValueError("training targets must be finite")
    if np.ptp(t) == 0.0:
        return np.full(np.asarray(query_inputs).shape[0], t[0])
    d = X.shape[1]
    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * RBF(
        length_scale=np.ones(d), length_scale_bounds=(1e-2, 1e2)
    )
    gp = GaussianProcessRegressor(
        kernel=kernel,
        alpha=alpha,
        normalize_y=True,
        n_restarts_optimizer=n_restarts,
        random_state=int(seed) % (2**32),
    )
    with warnings.catch_warnings():
        # bounded hyperparameter searches routinely stop on a bound
        warnings.simplefilter("ignore")
        gp.fit(X, t)
    return gp.predict(np.asarray(query_inputs, dtype=float))


def estimate_direct(
    summary: PredictiveSummary,
    pool: LabeledPool,
    grid: StateGrid,
    seed: int,
    with_matrices: bool = True,
    round_index: int = 0,
):
    """Bias vector via GP regression, cobias as its outer product.

    The outer-product construction is the path whose per-coordinate errors
    multiply across entries, in contrast to the quadratic estimator's single
    error per entry.
    """
    observed, biases = empirical_bias_vector(summary, pool)
    feats = point_features(summary, grid)
    bias_pred = direct_fit_predict(feats[observed], biases, feats, seed)
    field = PemseField(
        model_var=summary.variance,
        bias_sq=bias_pred * bias_pred,
        noise_var=np.zeros(grid.n),
    )
    decomp = None
    if with_matrices:
        decomp = assemble(
            model_covariance(summary.member_matrix),
            bias_outer_product(bias_pred),
            np.zeros((grid.n, grid.n)),
            round_index=round_index,
            bias_vec=bias_pred,
        )
        decomp.bias_vec = bias_pred
    return field, decomp


def bias_from_outer_matrix(bias_mat: np.ndarray, observed: np.ndarray, observed_bias: np.ndarray):
    """Signed bias vector recovered from an (approximately rank-1) cobias matrix.

    Magnitudes come from the diagonal; the sign pattern from the leading
    eigenvector, with the global sign chosen to best agree with the empirical
    biases at observed indices.
    """
    bias_mat = symmetrize(bias_mat)
    magnitude = np.sqrt(np.maximum(np.diag(bias_mat), 0.0))
    pairs = sym_eigen(bias_mat)
    lead = pairs.eigenvectors[:, 0]
    signs = np.sign(lead)
    signs[signs == 0] = 1.0
    candidate = magnitude * signs
    if observed is not None and len(observed) > 0:
        agreement = float(np.dot(candidate[observed], observed_bias))
        if agreement < 0:
            candidate = -candidate
    return candidate
